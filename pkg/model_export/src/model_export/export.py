"""Export trained models to the portable .pcmodel.json inference format.

The exporter walks a torch module in eval mode, quantizes parameters to
float32, and emits the layer-graph JSON the certification tooling loads.
Dropout is stripped; batch norm is exported in inference statistics form
(gamma, beta, mean, var, eps). Every bundle carries reference clouds and
the exporter's own forward-pass logits so any consumer can check
numerical parity without importing this package.
"""

import dataclasses
import json
import os

import numpy as np

BUNDLE_VERSION = 1
FORMAT_VERSION = 1


def _f32(tensor):
    """Flat row-major float32-quantized copy of a torch parameter."""
    arr = tensor.detach().cpu().numpy().astype(np.float32)
    return [float(v) for v in arr.ravel()]


class _GraphWriter:
    """Accumulates layer dicts with sequential ids; 0 is the input."""

    def __init__(self):
        self.layers = []
        self.prev = 0
        self.next_id = 1

    def add(self, kind, inputs=None, **fields):
        entry = {"id": self.next_id, "kind": kind,
                 "inputs": list(inputs) if inputs is not None else [self.prev]}
        entry.update(fields)
        self.layers.append(entry)
        self.prev = self.next_id
        self.next_id += 1
        return entry["id"]

    def linear(self, kind, module):
        return self.add(kind,
                        in_features=module.in_features,
                        out_features=module.out_features,
                        weights=_f32(module.weight),
                        bias=_f32(module.bias))

    def batchnorm(self, module):
        return self.add("BatchNorm",
                        features=module.num_features,
                        gamma=_f32(module.weight),
                        beta=_f32(module.bias),
                        mean=_f32(module.running_mean),
                        var=_f32(module.running_var),
                        eps=float(module.eps))


def export_classifier(model, num_points=0):
    """Serialize a PointNetClassifier to the portable graph document."""
    model.eval()
    g = _GraphWriter()
    for lin, bn in zip(model.encoder, model.encoder_bn):
        g.linear("PointwiseLinear", lin)
        g.batchnorm(bn)
        g.add("ReLU")
    g.add("GlobalMaxPool")
    for lin, bn in zip(model.head, model.head_bn):
        g.linear("Linear", lin)
        g.batchnorm(bn)
        g.add("ReLU")
    g.linear("Linear", model.out)
    g.add("Output")
    return {"format_version": FORMAT_VERSION, "task": "classification",
            "num_classes": model.out.out_features, "num_points": num_points,
            "layers": g.layers}


def export_segmenter(model, num_points=0):
    """Serialize a PointNetSegmenter, wiring Concatenate(1, 2, 3, Repeat)."""
    model.eval()
    g = _GraphWriter()
    skips = []
    for lin, bn in zip(model.encoder, model.encoder_bn):
        g.linear("PointwiseLinear", lin)
        g.batchnorm(bn)
        skips.append(g.add("ReLU"))
    g.linear("PointwiseLinear", model.bottleneck)
    g.batchnorm(model.bottleneck_bn)
    g.add("GlobalMaxPool")
    rep = g.add("Repeat")
    g.add("Concatenate", inputs=skips + [rep])
    for lin, bn in zip(model.head, model.head_bn):
        g.linear("PointwiseLinear", lin)
        g.batchnorm(bn)
        g.add("ReLU")
    g.linear("PointwiseLinear", model.out)
    g.add("Output")
    return {"format_version": FORMAT_VERSION, "task": "segmentation",
            "num_parts": model.out.out_features, "num_points": num_points,
            "layers": g.layers}


def reference_forward(doc, pts):
    """Evaluate the serialized graph on one cloud in float64.

    This is the exporter's own reading of the format, independent of the
    certification tooling: classification returns (num_classes,) logits,
    segmentation (n, num_parts).
    """
    pts = np.asarray(pts, np.float64)
    n = pts.shape[0]
    values = {0: pts}
    out = None
    for layer in doc["layers"]:
        srcs = [values[i] for i in layer["inputs"]]
        kind = layer["kind"]
        if kind == "PointwiseLinear" or kind == "Linear":
            w = np.asarray(layer["weights"], np.float64).reshape(
                layer["out_features"], layer["in_features"])
            v = srcs[0] @ w.T + np.asarray(layer["bias"], np.float64)
        elif kind == "BatchNorm":
            scale = np.asarray(layer["gamma"], np.float64) / np.sqrt(
                np.asarray(layer["var"], np.float64) + layer["eps"])
            v = (srcs[0] - np.asarray(layer["mean"], np.float64)) * scale \
                + np.asarray(layer["beta"], np.float64)
        elif kind == "ReLU":
            v = np.maximum(srcs[0], 0.0)
        elif kind == "GlobalMaxPool":
            v = srcs[0].max(axis=0)
        elif kind == "GlobalAvgPool":
            v = srcs[0].mean(axis=0)
        elif kind == "Repeat":
            v = np.tile(srcs[0], (n, 1))
        elif kind == "Concatenate":
            v = np.concatenate(srcs, axis=-1)
        elif kind == "Output":
            v = srcs[0]
            out = v
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        values[layer["id"]] = v
    if out is None:
        raise ValueError("graph has no Output layer")
    return out


@dataclasses.dataclass(frozen=True)
class ExportBundle:
    """Paths and metadata for one exported model plus its references."""

    directory: str
    model_path: str
    cloud_paths: tuple
    label_paths: tuple
    reference_path: str
    metadata: dict
    logits: tuple


def save_cloud(pts, path):
    np.savetxt(path, np.asarray(pts, np.float64), fmt="%.17g")


def save_labels(labels, path):
    np.savetxt(path, np.asarray(labels, np.int64), fmt="%d")


def write_bundle(doc, clouds, out_dir, metadata, labels=None):
    """Write the model, reference clouds, and reference logits to disk.

    The stored logits are computed by reference_forward on the quantized
    document, so reloading the bundle reproduces them bitwise.
    """
    os.makedirs(os.path.join(out_dir, "clouds"), exist_ok=True)
    model_path = os.path.join(out_dir, "model.pcmodel.json")
    with open(model_path, "w") as fh:
        json.dump(doc, fh)
    cloud_paths, label_paths, logits = [], [], []
    for i, pts in enumerate(clouds):
        rel = os.path.join("clouds", f"cloud_{i:03d}.xyz")
        save_cloud(pts, os.path.join(out_dir, rel))
        cloud_paths.append(rel)
        if labels is not None:
            lrel = os.path.join("clouds", f"cloud_{i:03d}.labels")
            save_labels(labels[i], os.path.join(out_dir, lrel))
            label_paths.append(lrel)
        logits.append(reference_forward(doc, np.loadtxt(
            os.path.join(out_dir, rel), ndmin=2)))
    reference = {
        "bundle_version": BUNDLE_VERSION,
        "task": doc["task"],
        "model": "model.pcmodel.json",
        "clouds": cloud_paths,
        "labels": label_paths,
        "logits": [l.tolist() for l in logits],
        "metadata": metadata,
    }
    reference_path = os.path.join(out_dir, "reference.json")
    with open(reference_path, "w") as fh:
        json.dump(reference, fh, indent=2)
        fh.write("\n")
    return ExportBundle(directory=out_dir, model_path=model_path,
                        cloud_paths=tuple(cloud_paths),
                        label_paths=tuple(label_paths),
                        reference_path=reference_path, metadata=dict(metadata),
                        logits=tuple(np.asarray(l) for l in logits))


def load_bundle(directory):
    """Reload a bundle written by write_bundle."""
    reference_path = os.path.join(directory, "reference.json")
    with open(reference_path) as fh:
        ref = json.load(fh)
    if ref.get("bundle_version") != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle_version {ref.get('bundle_version')!r}")
    return ExportBundle(
        directory=directory,
        model_path=os.path.join(directory, ref["model"]),
        cloud_paths=tuple(ref["clouds"]),
        label_paths=tuple(ref["labels"]),
        reference_path=reference_path,
        metadata=dict(ref["metadata"]),
        logits=tuple(np.asarray(l, np.float64) for l in ref["logits"]))
