"""PointNet-style model representation, file format, and forward evaluation.

A model is a DAG of layers over a single point-cloud source (pseudo-layer
id 0) ending in a single Output sink. Values flowing through the graph
are either per-point feature matrices (n, d) or global feature vectors
(d,); which one each layer produces is statically inferable and checked
at load time. The on-disk format is a versioned JSON document with
weights stored as flat row-major float32 arrays, loaded into float64 for
all computation.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .transforms import PointCloud

FORMAT_VERSION = 1
MAX_MODEL_BYTES = 64 * 1024 * 1024

KINDS = ("PointwiseLinear", "Linear", "BatchNorm", "ReLU", "GlobalMaxPool",
         "GlobalAvgPool", "Repeat", "Concatenate", "Output")
_LINEAR_KINDS = ("PointwiseLinear", "Linear")


@dataclass(frozen=True)
class LayerSpec:
    id: int
    kind: str
    inputs: tuple
    in_features: int = 0
    out_features: int = 0
    weights: np.ndarray = None   # (out_features, in_features)
    bias: np.ndarray = None      # (out_features,)
    gamma: np.ndarray = None
    beta: np.ndarray = None
    mean: np.ndarray = None
    var: np.ndarray = None
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"layer {self.id}: unsupported kind {self.kind!r}")
        if self.id <= 0:
            raise ValueError(f"layer id must be positive, got {self.id}")
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))
        if self.kind != "Concatenate" and len(self.inputs) != 1:
            raise ValueError(f"layer {self.id}: {self.kind} takes exactly one input")
        if self.kind == "Concatenate" and len(self.inputs) < 2:
            raise ValueError(f"layer {self.id}: Concatenate needs at least two inputs")
        if self.kind in _LINEAR_KINDS:
            w = np.asarray(self.weights, dtype=np.float64)
            b = np.asarray(self.bias, dtype=np.float64)
            if w.shape != (self.out_features, self.in_features):
                raise ValueError(
                    f"layer {self.id}: weight shape {w.shape} does not match "
                    f"({self.out_features}, {self.in_features})")
            if b.shape != (self.out_features,):
                raise ValueError(f"layer {self.id}: bias shape {b.shape} invalid")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {self.id}: non-finite weights")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "bias", b)
        if self.kind == "BatchNorm":
            d = self.in_features
            if d <= 0 or d != self.out_features:
                raise ValueError(f"layer {self.id}: BatchNorm features invalid")
            for name in ("gamma", "beta", "mean", "var"):
                arr = np.asarray(getattr(self, name), dtype=np.float64)
                if arr.shape != (d,) or not np.all(np.isfinite(arr)):
                    raise ValueError(f"layer {self.id}: BatchNorm {name} invalid")
                object.__setattr__(self, name, arr)
            if not (np.isfinite(self.eps) and self.eps >= 0):
                raise ValueError(f"layer {self.id}: BatchNorm eps invalid")
            if np.any(self.var + self.eps <= 0):
                raise ValueError(f"layer {self.id}: BatchNorm variance must be positive")


@dataclass(frozen=True)
class Model:
    layers: tuple
    task: str                 # "classification" or "segmentation"
    num_classes: int          # classes or part labels
    num_points: int = 0       # 0 = any

    def __post_init__(self):
        if self.task not in ("classification", "segmentation"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.num_points < 0:
            raise ValueError("num_points must be >= 0")
        layers = _toposort(self.layers)
        object.__setattr__(self, "layers", tuple(layers))
        shapes = infer_shapes(self)
        object.__setattr__(self, "_shapes", shapes)

    @property
    def sink(self) -> LayerSpec:
        outs = [l for l in self.layers if l.kind == "Output"]
        return outs[0]

    def shape_of(self, layer_id: int):
        """(per_point, width) of a layer's value; id 0 is the input."""
        return self._shapes[layer_id]


def _toposort(layers):
    by_id = {}
    for l in layers:
        if l.id in by_id:
            raise ValueError(f"duplicate layer id {l.id}")
        by_id[l.id] = l
    for l in layers:
        for i in l.inputs:
            if i != 0 and i not in by_id:
                raise ValueError(f"layer {l.id}: input {i} does not exist")
    outs = [l for l in layers if l.kind == "Output"]
    if len(outs) != 1:
        raise ValueError(f"model must have exactly one Output layer, found {len(outs)}")
    indeg = {l.id: sum(1 for i in l.inputs if i != 0) for l in layers}
    succs = {l.id: [] for l in layers}
    for l in layers:
        for i in l.inputs:
            if i != 0:
                succs[i].append(l.id)
    ready = sorted(i for i, d in indeg.items() if d == 0)
    order = []
    while ready:
        i = ready.pop(0)
        order.append(by_id[i])
        changed = False
        for s in succs[i]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(layers):
        raise ValueError("layer graph contains a cycle")
    return order


def infer_shapes(model: Model) -> dict:
    """Static (per_point, width) of every layer value; raises on mismatch."""
    shapes = {0: (True, 3)}
    for l in model.layers:
        ins = [shapes[i] for i in l.inputs]
        per, width = ins[0]
        if l.kind == "PointwiseLinear":
            if not per:
                raise ValueError(f"layer {l.id}: PointwiseLinear needs per-point input")
            if width != l.in_features:
                raise ValueError(
                    f"layer {l.id}: expects {l.in_features} features, input has {width}")
            out = (True, l.out_features)
        elif l.kind == "Linear":
            if per:
                raise ValueError(f"layer {l.id}: Linear needs a global input (pool first)")
            if width != l.in_features:
                raise ValueError(
                    f"layer {l.id}: expects {l.in_features} features, input has {width}")
            out = (False, l.out_features)
        elif l.kind == "BatchNorm":
            if width != l.in_features:
                raise ValueError(
                    f"layer {l.id}: BatchNorm over {l.in_features} features, input has {width}")
            out = (per, width)
        elif l.kind == "ReLU":
            out = (per, width)
        elif l.kind in ("GlobalMaxPool", "GlobalAvgPool"):
            if not per:
                raise ValueError(f"layer {l.id}: {l.kind} needs per-point input")
            out = (False, width)
        elif l.kind == "Repeat":
            if per:
                raise ValueError(f"layer {l.id}: Repeat broadcasts a global input")
            out = (True, width)
        elif l.kind == "Concatenate":
            if not all(p for p, _ in ins):
                raise ValueError(f"layer {l.id}: Concatenate needs per-point inputs")
            out = (True, sum(w for _, w in ins))
        else:  # Output
            out = (per, width)
            if model.task == "classification" and (per or width != model.num_classes):
                raise ValueError(
                    f"layer {l.id}: classification output must be {model.num_classes} logits")
            if model.task == "segmentation" and (not per or width != model.num_classes):
                raise ValueError(
                    f"layer {l.id}: segmentation output must be per-point "
                    f"{model.num_classes} logits")
        shapes[l.id] = out
    return shapes


def validate_model(model: Model) -> list:
    """Non-fatal structural warnings (shape errors raise at build time)."""
    warnings = []
    used = set()
    stack = [model.sink.id]
    by_id = {l.id: l for l in model.layers}
    while stack:
        i = stack.pop()
        if i in used or i == 0:
            continue
        used.add(i)
        stack.extend(by_id[i].inputs)
    for l in model.layers:
        if l.id not in used:
            warnings.append(f"layer {l.id} ({l.kind}) does not feed the output")
        if l.kind == "BatchNorm":
            pred = by_id.get(l.inputs[0])
            if pred is None or pred.kind not in _LINEAR_KINDS:
                warnings.append(
                    f"layer {l.id}: BatchNorm does not directly follow a linear layer, "
                    "so it cannot be folded")
    return warnings


def forward(model: Model, cloud) -> np.ndarray:
    """Concrete forward pass: (num_classes,) or (n, num_parts) logits."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got {pts.shape}")
    return _eval(model, pts)


def forward_batch(model: Model, clouds: np.ndarray) -> np.ndarray:
    """Vectorized forward over (B, n, 3) stacked clouds."""
    clouds = np.asarray(clouds, float)
    if clouds.ndim != 3 or clouds.shape[2] != 3:
        raise ValueError(f"expected (B, n, 3) clouds, got {clouds.shape}")
    return _eval(model, clouds)


def _eval(model: Model, x: np.ndarray) -> np.ndarray:
    n = x.shape[-2]
    if model.num_points and n != model.num_points:
        raise ValueError(f"model expects {model.num_points} points, got {n}")
    vals = {0: x}
    for l in model.layers:
        a = vals[l.inputs[0]]
        if l.kind in _LINEAR_KINDS:
            v = a @ l.weights.T + l.bias
        elif l.kind == "BatchNorm":
            scale = l.gamma / np.sqrt(l.var + l.eps)
            v = (a - l.mean) * scale + l.beta
        elif l.kind == "ReLU":
            v = np.maximum(a, 0.0)
        elif l.kind == "GlobalMaxPool":
            v = a.max(axis=-2)
        elif l.kind == "GlobalAvgPool":
            v = a.mean(axis=-2)
        elif l.kind == "Repeat":
            v = np.broadcast_to(a[..., None, :], a.shape[:-1] + (n, a.shape[-1]))
        elif l.kind == "Concatenate":
            v = np.concatenate([vals[i] for i in l.inputs], axis=-1)
        else:  # Output
            v = a
        vals[l.id] = v
    return vals[model.sink.id]


def forward_layers(model: Model, cloud) -> dict:
    """Forward pass keeping every layer's value, keyed by layer id.

    Shares evaluation semantics with forward; per-point values are
    (n, d), globals (d,). The input cloud appears under key 0.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got {pts.shape}")
    n = pts.shape[0]
    if model.num_points and n != model.num_points:
        raise ValueError(f"model expects {model.num_points} points, got {n}")
    vals = {0: pts}
    for l in model.layers:
        a = vals[l.inputs[0]]
        if l.kind in _LINEAR_KINDS:
            v = a @ l.weights.T + l.bias
        elif l.kind == "BatchNorm":
            scale = l.gamma / np.sqrt(l.var + l.eps)
            v = (a - l.mean) * scale + l.beta
        elif l.kind == "ReLU":
            v = np.maximum(a, 0.0)
        elif l.kind == "GlobalMaxPool":
            v = a.max(axis=-2)
        elif l.kind == "GlobalAvgPool":
            v = a.mean(axis=-2)
        elif l.kind == "Repeat":
            v = np.broadcast_to(a[None, :], (n, a.shape[-1]))
        elif l.kind == "Concatenate":
            v = np.concatenate([vals[i] for i in l.inputs], axis=-1)
        else:  # Output
            v = a
        vals[l.id] = v
    return vals


def fold_batchnorm(model: Model) -> Model:
    """Merge every BatchNorm into its preceding linear layer."""
    by_id = {l.id: l for l in model.layers}
    folded = {}       # original linear id -> updated LayerSpec
    redirect = {}     # BatchNorm id -> linear id it collapsed into
    for l in model.layers:
        if l.kind != "BatchNorm":
            continue
        pred = by_id[l.inputs[0]]
        if pred.kind not in _LINEAR_KINDS:
            raise ValueError(
                f"layer {l.id}: BatchNorm follows {pred.kind}, cannot fold")
        base = folded.get(pred.id, pred)
        scale = l.gamma / np.sqrt(l.var + l.eps)
        folded[pred.id] = replace(
            base,
            weights=base.weights * scale[:, None],
            bias=(base.bias - l.mean) * scale + l.beta,
        )
        redirect[l.id] = pred.id
    out = []
    for l in model.layers:
        if l.kind == "BatchNorm" and l.id in redirect:
            continue
        l = folded.get(l.id, l)
        new_inputs = tuple(redirect.get(i, i) for i in l.inputs)
        if new_inputs != l.inputs:
            l = replace(l, inputs=new_inputs)
        out.append(l)
    return Model(layers=tuple(out), task=model.task,
                 num_classes=model.num_classes, num_points=model.num_points)


def _f32_list(arr) -> list:
    """Flat row-major list of the float32-quantized values."""
    return [float(v) for v in np.asarray(arr, dtype=np.float32).ravel()]


def save_model(model: Model, path: str) -> None:
    layers = []
    for l in model.layers:
        d = {"id": l.id, "kind": l.kind, "inputs": list(l.inputs)}
        if l.kind in _LINEAR_KINDS:
            d["in_features"] = l.in_features
            d["out_features"] = l.out_features
            d["weights"] = _f32_list(l.weights)
            d["bias"] = _f32_list(l.bias)
        elif l.kind == "BatchNorm":
            d["features"] = l.in_features
            d["gamma"] = _f32_list(l.gamma)
            d["beta"] = _f32_list(l.beta)
            d["mean"] = _f32_list(l.mean)
            d["var"] = _f32_list(l.var)
            d["eps"] = float(l.eps)
        layers.append(d)
    count_key = "num_classes" if model.task == "classification" else "num_parts"
    doc = {
        "format_version": FORMAT_VERSION,
        "task": model.task,
        count_key: model.num_classes,
        "num_points": model.num_points,
        "layers": layers,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path: str) -> Model:
    size = os.path.getsize(path)
    if size > MAX_MODEL_BYTES:
        raise ValueError(
            f"model file is {size} bytes, over the {MAX_MODEL_BYTES} byte cap")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"model file does not parse as JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ValueError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    task = doc.get("task")
    if task == "classification":
        num = doc.get("num_classes")
    elif task == "segmentation":
        num = doc.get("num_parts")
    else:
        raise ValueError(f"unknown task {task!r}")
    if not isinstance(num, int):
        raise ValueError("missing class/part count")
    layers = []
    for entry in doc.get("layers", []):
        kind = entry.get("kind")
        lid = entry.get("id")
        if kind in _LINEAR_KINDS:
            din = int(entry["in_features"])
            dout = int(entry["out_features"])
            w = np.asarray(entry["weights"], dtype=np.float64)
            if w.size != din * dout:
                raise ValueError(
                    f"layer {lid}: {w.size} weights for a {dout}x{din} matrix")
            layers.append(LayerSpec(
                id=lid, kind=kind, inputs=entry["inputs"],
                in_features=din, out_features=dout,
                weights=w.reshape(dout, din), bias=entry["bias"]))
        elif kind == "BatchNorm":
            d = int(entry["features"])
            layers.append(LayerSpec(
                id=lid, kind=kind, inputs=entry["inputs"],
                in_features=d, out_features=d,
                gamma=entry["gamma"], beta=entry["beta"],
                mean=entry["mean"], var=entry["var"],
                eps=float(entry["eps"])))
        else:
            layers.append(LayerSpec(id=lid, kind=kind, inputs=entry["inputs"]))
    return Model(layers=tuple(layers), task=task, num_classes=num,
                 num_points=int(doc.get("num_points", 0)))


def load_xyz(path: str) -> PointCloud:
    """Plain text cloud: one whitespace-separated x y z triple per line."""
    rows = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if rows.shape[1] != 3:
        raise ValueError(f"expected 3 columns in {path}, got {rows.shape[1]}")
    return PointCloud(rows)


def save_xyz(cloud, path: str) -> None:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float)
    np.savetxt(path, pts, fmt="%.17g")


def load_labels(path: str) -> np.ndarray:
    labels = np.loadtxt(path, dtype=np.int64, ndmin=1)
    return labels


def save_labels(labels, path: str) -> None:
    np.savetxt(path, np.asarray(labels, dtype=np.int64), fmt="%d")


def _rand_linear(rng, lid, kind, din, dout, inputs):
    w = rng.normal(scale=1.0 / np.sqrt(din), size=(dout, din))
    b = rng.normal(scale=0.05, size=dout)
    return LayerSpec(id=lid, kind=kind, inputs=inputs,
                     in_features=din, out_features=dout,
                     weights=np.float64(np.float32(w)), bias=np.float64(np.float32(b)))


def _rand_bn(rng, lid, d, inputs):
    return LayerSpec(
        id=lid, kind="BatchNorm", inputs=inputs, in_features=d, out_features=d,
        gamma=np.float64(np.float32(rng.uniform(0.6, 1.4, d))),
        beta=np.float64(np.float32(rng.normal(scale=0.1, size=d))),
        mean=np.float64(np.float32(rng.normal(scale=0.2, size=d))),
        var=np.float64(np.float32(rng.uniform(0.5, 1.5, d))),
        eps=1e-5)


def build_classification(num_classes: int, widths=(64, 64, 64, 128, 1024),
                         head=(512, 256), num_points: int = 0, seed: int = 0,
                         batchnorm: bool = True) -> Model:
    """Classification architecture: pointwise encoder, max pool, dense head."""
    rng = np.random.default_rng(seed)
    layers = []
    nid = 1
    prev, d = 0, 3
    for w in widths:
        layers.append(_rand_linear(rng, nid, "PointwiseLinear", d, w, (prev,)))
        prev, d, nid = nid, w, nid + 1
        if batchnorm:
            layers.append(_rand_bn(rng, nid, d, (prev,)))
            prev, nid = nid, nid + 1
        layers.append(LayerSpec(id=nid, kind="ReLU", inputs=(prev,)))
        prev, nid = nid, nid + 1
    layers.append(LayerSpec(id=nid, kind="GlobalMaxPool", inputs=(prev,)))
    prev, nid = nid, nid + 1
    for w in head:
        layers.append(_rand_linear(rng, nid, "Linear", d, w, (prev,)))
        prev, d, nid = nid, w, nid + 1
        if batchnorm:
            layers.append(_rand_bn(rng, nid, d, (prev,)))
            prev, nid = nid, nid + 1
        layers.append(LayerSpec(id=nid, kind="ReLU", inputs=(prev,)))
        prev, nid = nid, nid + 1
    layers.append(_rand_linear(rng, nid, "Linear", d, num_classes, (prev,)))
    prev, nid = nid, nid + 1
    layers.append(LayerSpec(id=nid, kind="Output", inputs=(prev,)))
    return Model(layers=tuple(layers), task="classification",
                 num_classes=num_classes, num_points=num_points)


def build_segmentation(num_parts: int, widths=(64, 128, 256), bottleneck: int = 128,
                       head=(256, 128), num_points: int = 0, seed: int = 0,
                       batchnorm: bool = True) -> Model:
    """Segmentation architecture: pointwise encoder with skip links, pooled
    global feature repeated and concatenated back onto every point."""
    rng = np.random.default_rng(seed)
    layers = []
    nid = 1
    prev, d = 0, 3
    skips = []
    for w in widths:
        layers.append(_rand_linear(rng, nid, "PointwiseLinear", d, w, (prev,)))
        prev, d, nid = nid, w, nid + 1
        if batchnorm:
            layers.append(_rand_bn(rng, nid, d, (prev,)))
            prev, nid = nid, nid + 1
        layers.append(LayerSpec(id=nid, kind="ReLU", inputs=(prev,)))
        prev, nid = nid, nid + 1
        skips.append(prev)
    layers.append(_rand_linear(rng, nid, "PointwiseLinear", d, bottleneck, (prev,)))
    prev, d, nid = nid, bottleneck, nid + 1
    if batchnorm:
        layers.append(_rand_bn(rng, nid, d, (prev,)))
        prev, nid = nid, nid + 1
    layers.append(LayerSpec(id=nid, kind="GlobalMaxPool", inputs=(prev,)))
    prev, nid = nid, nid + 1
    layers.append(LayerSpec(id=nid, kind="Repeat", inputs=(prev,)))
    prev, nid = nid, nid + 1
    layers.append(LayerSpec(id=nid, kind="Concatenate", inputs=tuple(skips) + (prev,)))
    prev, nid = nid, nid + 1
    d = sum(widths) + bottleneck
    for w in head:
        layers.append(_rand_linear(rng, nid, "PointwiseLinear", d, w, (prev,)))
        prev, d, nid = nid, w, nid + 1
        if batchnorm:
            layers.append(_rand_bn(rng, nid, d, (prev,)))
            prev, nid = nid, nid + 1
        layers.append(LayerSpec(id=nid, kind="ReLU", inputs=(prev,)))
        prev, nid = nid, nid + 1
    layers.append(_rand_linear(rng, nid, "PointwiseLinear", d, num_parts, (prev,)))
    prev, nid = nid, nid + 1
    layers.append(LayerSpec(id=nid, kind="Output", inputs=(prev,)))
    return Model(layers=tuple(layers), task="segmentation",
                 num_classes=num_parts, num_points=num_points)
