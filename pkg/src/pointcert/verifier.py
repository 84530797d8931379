"""Abstract interpretation of point-cloud networks over parameter boxes.

Every neuron carries affine lower/upper expressions in terms of its
predecessor layer's neurons. Concrete bounds come from back-substituting
an expression layer by layer down to the input abstraction, splitting
coefficients by sign at layers whose lower and upper expressions differ
(ReLU and max-pool nodes), and finally ranging the resulting affine
function of the transformation parameters over their box. Substitution
accumulates coefficient blocks per predecessor in a dictionary keyed by
layer, so graphs with multiple-predecessor joins (Concatenate) reuse the
shared branches instead of exploding.

Max pools become a chain of virtual layers: each level relaxes groups of
at most group_size nodes with the configured strategy, and the next
level consumes the previous one. Group dominance tests are fed by
back-substituted pairwise difference bounds, which is how expression
relations between pooled neurons (not just their intervals) are
exploited.

The input abstraction is uniform: affine bounds in k parameters over a
ParamBox. Semantic transforms plug in their Taylor enclosures; epsilon
boxes use one parameter per input coordinate with identity bounds.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import maxpool_relax as mp
from . import network as nw
from . import taylor_relax as tr
from .maxpool_relax import MaxPoolConfig
from .network import Model
from .taylor_relax import LinearBounds
from .transforms import ParamBox, PointCloud, TransformSpec

_CHUNK = 512


@dataclass(frozen=True)
class InputAbstraction:
    """Affine parameter bounds on the 3n flattened input coordinates."""

    n: int
    bounds: LinearBounds  # shapes (3n, k) / (3n,)

    def __post_init__(self):
        if self.bounds.b_l.shape != (3 * self.n,):
            raise ValueError(
                f"input abstraction covers {self.bounds.b_l.shape} neurons, "
                f"expected ({3 * self.n},)")


def semantic_input(spec: TransformSpec, cloud: PointCloud, box: ParamBox) -> InputAbstraction:
    """Input abstraction for a transformed cloud over a parameter box."""
    lb = tr.taylor_bounds(spec, cloud, box)
    n = len(cloud)
    flat = LinearBounds(
        w_l=lb.w_l.reshape(3 * n, box.k), b_l=lb.b_l.reshape(3 * n),
        w_u=lb.w_u.reshape(3 * n, box.k), b_u=lb.b_u.reshape(3 * n), box=box)
    return InputAbstraction(n=n, bounds=flat)


def linf_input(cloud: PointCloud, eps: float) -> InputAbstraction:
    """Per-coordinate epsilon box as a 3n-parameter identity abstraction."""
    if not (np.isfinite(eps) and eps >= 0):
        raise ValueError("epsilon must be nonnegative and finite")
    n = len(cloud)
    flat = cloud.points.reshape(3 * n)
    box = ParamBox(flat - eps, flat + eps)
    eye = np.eye(3 * n)
    zero = np.zeros(3 * n)
    bounds = LinearBounds(w_l=eye, b_l=zero, w_u=eye.copy(), b_u=zero.copy(), box=box)
    return InputAbstraction(n=n, bounds=bounds)


def relax_relu(lo, hi):
    """Per-neuron affine ReLU relaxation: ((lam, 0), (slope, offset)).

    Stable neurons pass through as zero or identity. Crossing neurons get
    the chord as upper bound and lambda x as lower bound, lambda = 1 when
    u >= |l| (ties included) and 0 otherwise.
    """
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if np.any(lo > hi):
        raise ValueError("need lo <= hi")
    dead = hi <= 0.0
    alive = lo >= 0.0
    cross = ~dead & ~alive
    lam = np.where(alive, 1.0, 0.0)
    lam = np.where(cross & (hi >= -lo), 1.0, lam)
    slope = np.where(alive, 1.0, 0.0)
    offset = np.zeros_like(lo)
    if np.any(cross):
        s = hi[cross] / (hi[cross] - lo[cross])
        t = -s * lo[cross]
        # keep the chord above relu at the endpoints under fp rounding
        t = t + 4.0 * np.spacing(np.abs(hi[cross]) + np.abs(t))
        slope = slope.copy()
        slope[cross] = s
        offset[cross] = t
    return (lam, np.zeros_like(lo)), (slope, offset)


@dataclass(frozen=True)
class AffineMap:
    """Sparse exact affine map in coordinate form: out = scatter + const."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    const: np.ndarray
    out_size: int
    in_size: int

    def to_dense(self) -> np.ndarray:
        w = np.zeros((self.out_size, self.in_size))
        np.add.at(w, (self.rows, self.cols), self.vals)
        return w

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.to_dense() @ x + self.const


def relax_avgpool(n: int, width: int) -> AffineMap:
    """Exact affine encoding of the mean over n point slots."""
    rows = np.repeat(np.arange(width), n)
    cols = (np.tile(np.arange(n), width) * width
            + np.repeat(np.arange(width), n))
    vals = np.full(rows.size, 1.0 / n)
    return AffineMap(rows, cols, vals, np.zeros(width), width, n * width)


def relax_concat_repeat(layer: nw.LayerSpec, n: int, pred_widths) -> AffineMap:
    """Exact affine encoding of Repeat and Concatenate.

    The input space is the predecessors' neurons stacked in declared
    order (globals have width d, per-point blocks n*d).
    """
    if layer.kind == "Repeat":
        d = pred_widths[0]
        rows = np.arange(n * d)
        cols = np.tile(np.arange(d), n)
        return AffineMap(rows, cols, np.ones(n * d), np.zeros(n * d), n * d, d)
    if layer.kind != "Concatenate":
        raise ValueError(f"layer {layer.id} is {layer.kind}, not Repeat/Concatenate")
    total = sum(pred_widths)
    rows, cols = [], []
    in_off = 0
    out_off = 0
    for w in pred_widths:
        p = np.arange(n)[:, None]
        c = np.arange(w)[None, :]
        rows.append((p * total + out_off + c).ravel())
        cols.append((in_off + p * w + c).ravel())
        in_off += n * w
        out_off += w
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return AffineMap(rows, cols, np.ones(rows.size), np.zeros(n * total),
                     n * total, in_off)


class _InputNode:
    label = "input"

    def __init__(self, abstraction: InputAbstraction):
        self.ab = abstraction
        self.size = 3 * abstraction.n
        b = abstraction.bounds
        self.conc_lo, self.conc_hi = b.concretize()

    def concretize(self, A, const, direction):
        b = self.ab.bounds
        pos = np.maximum(A, 0.0)
        neg = np.minimum(A, 0.0)
        if direction == "lo":
            W = pos @ b.w_l + neg @ b.w_u
            c = const + pos @ b.b_l + neg @ b.b_u
            lo, _ = tr.affine_range(W, c, c, b.box)
            return lo
        W = pos @ b.w_u + neg @ b.w_l
        c = const + pos @ b.b_u + neg @ b.b_l
        _, hi = tr.affine_range(W, c, c, b.box)
        return hi


class _DenseLinearNode:
    """PointwiseLinear (n slots) or Linear (n = None): exact affine."""

    def __init__(self, pred, W, b, n, label):
        self.pred = pred
        self.W = W
        self.b = b
        self.n = n
        self.label = label
        d_out = W.shape[0]
        self.size = d_out if n is None else n * d_out

    def backsub(self, A, const, direction):
        if self.n is None:
            newA = A @ self.W
            const = const + A @ self.b
        else:
            m = A.shape[0]
            A3 = A.reshape(m, self.n, self.W.shape[0])
            newA = np.einsum("mpo,oi->mpi", A3, self.W).reshape(m, -1)
            const = const + np.einsum("mpo,o->m", A3, self.b)
        return [(self.pred, newA)], const


class _MapNode:
    """Exact sparse affine layer over one or more predecessors."""

    def __init__(self, preds, pred_sizes, amap: AffineMap, label):
        self.preds = tuple(preds)
        self.pred_sizes = tuple(pred_sizes)
        self.amap = amap
        self.label = label
        self.size = amap.out_size

    def backsub(self, A, const, direction):
        m = A.shape[0]
        newA = np.zeros((m, self.amap.in_size))
        cols = self.amap.cols
        rows = self.amap.rows
        vals = self.amap.vals
        np.add.at(newA, (slice(None), cols), A[:, rows] * vals)
        const = const + A @ self.amap.const
        out = []
        off = 0
        for p, s in zip(self.preds, self.pred_sizes):
            out.append((p, newA[:, off:off + s]))
            off += s
        return out, const


class _ReLUNode:
    def __init__(self, pred, lo, hi, label):
        self.pred = pred
        self.label = label
        self.size = lo.size
        (self.lam, _), (self.slope, self.offset) = relax_relu(lo, hi)

    def backsub(self, A, const, direction):
        pos = np.maximum(A, 0.0)
        neg = np.minimum(A, 0.0)
        if direction == "lo":
            newA = pos * self.lam + neg * self.slope
            const = const + neg @ self.offset
        else:
            newA = pos * self.slope + neg * self.lam
            const = const + pos @ self.offset
        return [(self.pred, newA)], const


class _PoolLevelNode:
    """One level of a grouped max-pool tree.

    members[i] lists the predecessor indices of node i (padded; mlen[i]
    gives the true count). Lower/upper affine bounds per node live in
    (wl, bl) and (wu, bu) over those members.
    """

    def __init__(self, pred, members, mlen, wl, bl, wu, bu, label):
        self.pred = pred
        self.members = members
        self.mlen = mlen
        self.wl = wl
        self.bl = bl
        self.wu = wu
        self.bu = bu
        self.label = label
        self.size = members.shape[0]

    def _scatter(self, coeff_rows, wexpr, m, in_size):
        newA = np.zeros((m, in_size))
        vals = coeff_rows[:, :, None] * wexpr[None, :, :]   # (m, size, gmax)
        np.add.at(newA, (np.arange(m)[:, None, None],
                         self.members[None, :, :]), vals)
        return newA

    def backsub(self, A, const, direction, in_size):
        m = A.shape[0]
        pos = np.maximum(A, 0.0)
        neg = np.minimum(A, 0.0)
        if direction == "lo":
            newA = (self._scatter(pos, self.wl, m, in_size)
                    + self._scatter(neg, self.wu, m, in_size))
            const = const + pos @ self.bl + neg @ self.bu
        else:
            newA = (self._scatter(pos, self.wu, m, in_size)
                    + self._scatter(neg, self.wl, m, in_size))
            const = const + pos @ self.bu + neg @ self.bl
        return [(self.pred, newA)], const


class Propagation:
    """Per-layer abstract state: nodes in substitution order."""

    def __init__(self, model: Model, input_abs: InputAbstraction,
                 config: MaxPoolConfig):
        self.model = model
        self.config = config
        self.nodes = [_InputNode(input_abs)]
        self.layer_pos = {0: 0}

    def bound_rows(self, pos, A, const, direction):
        """Concrete bound of rows A . (node pos neurons) + const."""
        A = np.asarray(A, float)
        m = A.shape[0]
        const = np.broadcast_to(np.asarray(const, float), (m,))
        out = np.empty(m)
        for start in range(0, m, _CHUNK):
            sl = slice(start, min(start + _CHUNK, m))
            out[sl] = self._bound_chunk(pos, A[sl], const[sl], direction)
        return out

    def _bound_chunk(self, pos, A, const, direction):
        # overflow becomes non-finite bounds, caught by the caller's check
        with np.errstate(over="ignore", invalid="ignore"):
            return self._bound_chunk_inner(pos, A, const, direction)

    def _bound_chunk_inner(self, pos, A, const, direction):
        acc = {pos: np.array(A, float)}
        const = np.array(const, float, copy=True)
        for p in range(pos, 0, -1):
            Ap = acc.pop(p, None)
            if Ap is None:
                continue
            node = self.nodes[p]
            if isinstance(node, _PoolLevelNode):
                contribs, const = node.backsub(Ap, const, direction,
                                               self.nodes[node.pred].size)
            else:
                contribs, const = node.backsub(Ap, const, direction)
            for q, Aq in contribs:
                if q in acc:
                    acc[q] = acc[q] + Aq
                else:
                    acc[q] = Aq
        A0 = acc.pop(0, None)
        if A0 is None:
            A0 = np.zeros((A.shape[0], self.nodes[0].size))
        return self.nodes[0].concretize(A0, const, direction)

    def _identity_bounds(self, pos):
        size = self.nodes[pos].size
        lo = np.empty(size)
        hi = np.empty(size)
        for start in range(0, size, _CHUNK):
            stop = min(start + _CHUNK, size)
            A = np.zeros((stop - start, size))
            A[np.arange(stop - start), np.arange(start, stop)] = 1.0
            zero = np.zeros(stop - start)
            lo[start:stop] = self._bound_chunk(pos, A, zero, "lo")
            hi[start:stop] = self._bound_chunk(pos, A, zero, "hi")
        return lo, hi

    def concrete(self, layer_id):
        """(conc_lo, conc_hi) arrays of a real layer (0 = input)."""
        node = self.nodes[self.layer_pos[layer_id]]
        return node.conc_lo.copy(), node.conc_hi.copy()

    def logits_node(self):
        return self.layer_pos[self.model.sink.id]


def layer_gap_report(prop: Propagation):
    """Mean concrete bound gap per node, input first, in evaluation order."""
    return [(node.label, float(np.mean(node.conc_hi - node.conc_lo)))
            for node in prop.nodes]


def _pool_levels(prop: Propagation, pred_pos, n_slots, d, config, layer_id):
    """Build the virtual level chain of one GlobalMaxPool layer."""
    cur_pos, cur_slots = pred_pos, n_slots
    level = 0
    while cur_slots > 1:
        level += 1
        chunks = mp.balanced_groups(cur_slots, config.group_size)
        count = len(chunks)
        gmax = max(len(c) for c in chunks)
        cur = prop.nodes[cur_pos]
        lo2 = cur.conc_lo.reshape(cur_slots, d)
        hi2 = cur.conc_hi.reshape(cur_slots, d)

        groups = {}
        for ci, chunk in enumerate(chunks):
            for c in range(d):
                idx = tuple(p * d + c for p in chunk)
                groups[(ci, c)] = mp.PoolGroup(lo2[chunk, c], hi2[chunk, c],
                                               indices=idx)
        diffs = {}
        if config.strategy == "improved":
            need = []
            for key, group in groups.items():
                if group.size > 1 and mp.dominance_check(group) is None:
                    j = int(np.argmax(group.lo))
                    need.extend((group.indices[j], group.indices[i])
                                for i in range(group.size) if i != j)
            if need:
                A = np.zeros((len(need), cur.size))
                for r, (ji, ii) in enumerate(need):
                    A[r, ji] = 1.0
                    A[r, ii] = -1.0
                vals = prop.bound_rows(cur_pos, A, 0.0, "lo")
                diffs = {pair: float(v) for pair, v in zip(need, vals)}

        def diff_lower(ji, ii):
            return diffs.get((ji, ii), -math.inf)

        members = np.zeros((count * d, gmax), dtype=int)
        mlen = np.zeros(count * d, dtype=int)
        wl = np.zeros((count * d, gmax))
        bl = np.zeros(count * d)
        wu = np.zeros((count * d, gmax))
        bu = np.zeros(count * d)
        for (ci, c), group in groups.items():
            rel = mp.relax_group(group, config,
                                 diff_lower if config.strategy == "improved" else None)
            row = ci * d + c
            g = group.size
            members[row, :g] = group.indices
            members[row, g:] = group.indices[0]  # padding, zero coefficients
            mlen[row] = g
            wl[row, :g], bl[row] = rel.lower
            wu[row, :g], bu[row] = rel.upper
        node = _PoolLevelNode(cur_pos, members, mlen, wl, bl, wu, bu,
                              f"GlobalMaxPool[{layer_id}] level {level}")
        prop.nodes.append(node)
        pos = len(prop.nodes) - 1
        # concrete bounds: interval of the max fused with back-substitution
        ilo = np.array([np.max(groups[(ci, c)].lo) for ci in range(count)
                        for c in range(d)])
        ihi = np.array([np.max(groups[(ci, c)].hi) for ci in range(count)
                        for c in range(d)])
        blo, bhi = prop._identity_bounds(pos)
        node.conc_lo = np.minimum(np.maximum(ilo, blo), ihi)
        node.conc_hi = np.maximum(np.minimum(ihi, bhi), node.conc_lo)
        if not np.all(np.isfinite(node.conc_lo) & np.isfinite(node.conc_hi)):
            raise ValueError(f"numerical overflow propagating through {node.label}")
        cur_pos, cur_slots = pos, count
    return cur_pos


def propagate(model: Model, input_abs: InputAbstraction,
              config: MaxPoolConfig = MaxPoolConfig()) -> Propagation:
    """Annotate every layer (and virtual pool level) with sound bounds."""
    prop = Propagation(model, input_abs, config)
    n = input_abs.n
    if model.num_points and n != model.num_points:
        raise ValueError(f"model expects {model.num_points} points, got {n}")
    for layer in model.layers:
        preds = layer.inputs
        ppos = [prop.layer_pos[i] for i in preds]
        shapes = [model.shape_of(i) for i in preds]
        per, width = shapes[0]
        label = f"{layer.kind}[{layer.id}]"
        if layer.kind == "PointwiseLinear":
            node = _DenseLinearNode(ppos[0], layer.weights, layer.bias, n, label)
        elif layer.kind == "Linear":
            node = _DenseLinearNode(ppos[0], layer.weights, layer.bias, None, label)
        elif layer.kind == "BatchNorm":
            scale = layer.gamma / np.sqrt(layer.var + layer.eps)
            shift = layer.beta - layer.mean * scale
            reps = n if per else 1
            size = reps * width
            rows = np.arange(size)
            amap = AffineMap(rows, rows, np.tile(scale, reps),
                             np.tile(shift, reps), size, size)
            node = _MapNode(ppos, [size], amap, label)
        elif layer.kind == "ReLU":
            pn = prop.nodes[ppos[0]]
            node = _ReLUNode(ppos[0], pn.conc_lo, pn.conc_hi, label)
        elif layer.kind == "GlobalAvgPool":
            node = _MapNode(ppos, [n * width], relax_avgpool(n, width), label)
        elif layer.kind in ("Repeat", "Concatenate"):
            widths = [w for _, w in shapes]
            sizes = [n * w if p else w for p, w in shapes]
            node = _MapNode(ppos, sizes,
                            relax_concat_repeat(layer, n, widths), label)
        elif layer.kind == "Output":
            size = prop.nodes[ppos[0]].size
            rows = np.arange(size)
            amap = AffineMap(rows, rows, np.ones(size), np.zeros(size), size, size)
            node = _MapNode(ppos, [size], amap, label)
        elif layer.kind == "GlobalMaxPool":
            if n == 1:
                rows = np.arange(width)
                amap = AffineMap(rows, rows, np.ones(width), np.zeros(width),
                                 width, width)
                node = _MapNode(ppos, [width], amap, label)
            else:
                pos = _pool_levels(prop, ppos[0], n, width, config, layer.id)
                prop.layer_pos[layer.id] = pos
                prop.nodes[pos].label = label + " (root)"
                continue
        else:
            raise ValueError(f"layer {layer.id}: unsupported kind {layer.kind}")
        prop.nodes.append(node)
        pos = len(prop.nodes) - 1
        prop.layer_pos[layer.id] = pos
        if layer.kind == "ReLU":
            pn = prop.nodes[ppos[0]]
            node.conc_lo = np.maximum(pn.conc_lo, 0.0)
            node.conc_hi = np.maximum(pn.conc_hi, 0.0)
        else:
            node.conc_lo, node.conc_hi = prop._identity_bounds(pos)
        if not (np.all(np.isfinite(node.conc_lo))
                and np.all(np.isfinite(node.conc_hi))):
            raise ValueError(
                f"numerical overflow propagating through {node.label}")
    return prop


@dataclass(frozen=True)
class CellResult:
    box: ParamBox
    margin: float
    interval_margin: float
    certified: bool


@dataclass(frozen=True)
class Verdict:
    certified: bool
    margin: float
    interval_margin: float
    predicted: int
    target: int
    misclassified: bool
    cells: tuple
    wall_time_s: float


@dataclass(frozen=True)
class PointVerdict:
    index: int
    correct: bool
    certified: bool
    margin: float


@dataclass(frozen=True)
class SegmentationVerdict:
    points: tuple
    ratio: float
    correct_count: int
    certified_count: int
    wall_time_s: float


def _margin_rows(num_classes, target, base=0, stride=None):
    """Difference rows logit_target - logit_j for all j != target."""
    stride = num_classes if stride is None else stride
    A = np.zeros((num_classes - 1, stride))
    r = 0
    for j in range(num_classes):
        if j == target:
            continue
        A[r, base + target] = 1.0
        A[r, base + j] = -1.0
        r += 1
    return A


def _cells_of(box: ParamBox, splits):
    if splits is None:
        return [box]
    return list(tr.split(box, splits).cells)


def _cell_margins_classification(model, cloud, spec, box, target, config):
    ab = semantic_input(spec, cloud, box) if spec is not None else box
    prop = propagate(model, ab, config)
    pos = prop.logits_node()
    C = model.num_classes
    A = _margin_rows(C, target)
    joint = prop.bound_rows(pos, A, 0.0, "lo")
    lo, hi = prop.nodes[pos].conc_lo, prop.nodes[pos].conc_hi
    others = [j for j in range(C) if j != target]
    interval = lo[target] - hi[others]
    return float(joint.min()), float(interval.min())


def certify_classification(model: Model, cloud: PointCloud, spec, box,
                           splits=None, target_label=None, *,
                           config: MaxPoolConfig = MaxPoolConfig(),
                           threads: int = 1) -> Verdict:
    """Certify that the argmax logit stays target_label over the box.

    spec/box describe a semantic transformation; pass spec=None and an
    InputAbstraction as box for a raw coordinate perturbation. Splits
    (granularity for tr.split) subdivide the parameter box; every cell
    must certify. Misclassified inputs are never certified and are
    flagged so callers can exclude them from statistics.
    """
    t0 = time.perf_counter()
    if target_label is None:
        raise ValueError("target_label is required")
    if spec is None and splits is not None:
        raise ValueError("splits apply to parameter boxes only")
    logits = nw.forward(model, cloud)
    predicted = int(np.argmax(logits))
    if predicted != target_label:
        return Verdict(certified=False, margin=-math.inf, interval_margin=-math.inf,
                       predicted=predicted, target=target_label, misclassified=True,
                       cells=(), wall_time_s=time.perf_counter() - t0)
    # spec=None means box already is an InputAbstraction
    cells = [box] if spec is None else _cells_of(box, splits)

    def work(cell):
        return _cell_margins_classification(model, cloud, spec, cell,
                                            target_label, config)

    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, cells))
    else:
        results = [work(c) for c in cells]
    cell_results = tuple(
        CellResult(box=cell if spec is not None else None, margin=m,
                   interval_margin=im, certified=m > 0.0)
        for cell, (m, im) in zip(cells, results))
    margin = min(r.margin for r in cell_results)
    interval_margin = min(r.interval_margin for r in cell_results)
    return Verdict(certified=all(r.certified for r in cell_results),
                   margin=margin, interval_margin=interval_margin,
                   predicted=predicted, target=target_label, misclassified=False,
                   cells=cell_results, wall_time_s=time.perf_counter() - t0)


def certify_segmentation(model: Model, cloud: PointCloud, labels, spec, box,
                         splits=None, *, config: MaxPoolConfig = MaxPoolConfig(),
                         threads: int = 1) -> SegmentationVerdict:
    """Per-point certification for a segmentation model.

    Correctly labeled points are certified when their label's logit
    exceeds every other part logit over every split cell.
    """
    t0 = time.perf_counter()
    labels = np.asarray(labels, dtype=int)
    n = len(cloud)
    if labels.shape != (n,):
        raise ValueError(f"need {n} labels, got shape {labels.shape}")
    logits = nw.forward(model, cloud)            # (n, parts)
    predicted = np.argmax(logits, axis=1)
    correct = predicted == labels
    parts = model.num_classes
    cells = _cells_of(box, splits)
    correct_idx = np.flatnonzero(correct)

    def work(cell):
        ab = semantic_input(spec, cloud, cell)
        prop = propagate(model, ab, config)
        pos = prop.logits_node()
        blocks = [_margin_rows(parts, int(labels[p]), base=p * parts,
                               stride=n * parts) for p in correct_idx]
        if not blocks:
            return np.zeros((0,))
        A = np.vstack(blocks)
        vals = prop.bound_rows(pos, A, 0.0, "lo")
        return vals.reshape(len(correct_idx), parts - 1).min(axis=1)

    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, cells))
    else:
        results = [work(c) for c in cells]
    per_point = (np.vstack(results).min(axis=0) if correct_idx.size
                 else np.zeros((0,)))
    points = []
    margins = dict(zip(correct_idx.tolist(), per_point.tolist()))
    for p in range(n):
        if correct[p]:
            m = margins[p]
            points.append(PointVerdict(index=p, correct=True,
                                       certified=m > 0.0, margin=float(m)))
        else:
            points.append(PointVerdict(index=p, correct=False,
                                       certified=False, margin=-math.inf))
    ncorrect = int(correct.sum())
    ncert = sum(1 for pt in points if pt.certified)
    ratio = (ncert / ncorrect) if ncorrect else 0.0
    return SegmentationVerdict(points=tuple(points), ratio=ratio,
                               correct_count=ncorrect, certified_count=ncert,
                               wall_time_s=time.perf_counter() - t0)
