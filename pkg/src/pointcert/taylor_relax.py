"""Sound affine enclosures of transformed coordinates over a parameter box.

For a transformation f(p, theta) and a box of parameter vectors, each
output coordinate is bracketed between two affine functions of theta
that share a slope: the first order Taylor expansion at the box
midpoint, shifted down and up by an interval enclosure of the Lagrange
remainder. The remainder is the quadratic form of the parameter offsets
with the interval Hessian over the box, accumulated term by term in
outward-rounded interval arithmetic, so the enclosure holds in floating
point, not just over the reals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import interval as iv
from . import transforms as tf
from .transforms import ParamBox, PointCloud, TransformSpec


@dataclass(frozen=True)
class LinearBounds:
    """Affine lower/upper bounds in theta, valid on a parameter box.

    Leading axes index points and coordinates: slopes have shape
    (..., k) and intercepts the matching (...). Lower bound is
    theta . w_l + b_l, upper is theta . w_u + b_u. Slopes may differ,
    though the Taylor construction emits w_l = w_u.
    """

    w_l: np.ndarray
    b_l: np.ndarray
    w_u: np.ndarray
    b_u: np.ndarray
    box: ParamBox

    def __post_init__(self):
        w_l = np.asarray(self.w_l, float)
        w_u = np.asarray(self.w_u, float)
        b_l = np.asarray(self.b_l, float)
        b_u = np.asarray(self.b_u, float)
        k = self.box.k
        if w_l.shape != w_u.shape or b_l.shape != b_u.shape:
            raise ValueError("lower/upper shapes differ")
        if w_l.shape != b_l.shape + (k,):
            raise ValueError(
                f"slope shape {w_l.shape} does not extend intercept shape {b_l.shape} by k={k}")
        for name, arr in (("w_l", w_l), ("b_l", b_l), ("w_u", w_u), ("b_u", b_u)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "w_l", w_l)
        object.__setattr__(self, "w_u", w_u)
        object.__setattr__(self, "b_l", b_l)
        object.__setattr__(self, "b_u", b_u)

    def evaluate(self, thetas: np.ndarray):
        """Evaluate both bounds at a (S, k) batch: two (S, ...) arrays."""
        thetas = np.atleast_2d(np.asarray(thetas, float))
        lower = np.tensordot(thetas, self.w_l, axes=(1, -1)) + self.b_l
        upper = np.tensordot(thetas, self.w_u, axes=(1, -1)) + self.b_u
        return lower, upper

    def concretize(self):
        """Interval ranges over the box: (lo, hi) arrays shaped like b_l."""
        lo, hi = affine_range(self.w_l, self.b_l, self.b_l, self.box)
        lo2, hi2 = affine_range(self.w_u, self.b_u, self.b_u, self.box)
        return lo, hi2


def affine_range(w: np.ndarray, b_lo, b_hi, box: ParamBox):
    """Outward-rounded range of theta . w + [b_lo, b_hi] over the box."""
    w = np.asarray(w, float)
    lo = np.broadcast_to(np.asarray(b_lo, float), w.shape[:-1]).copy()
    hi = np.broadcast_to(np.asarray(b_hi, float), w.shape[:-1]).copy()
    for i in range(box.k):
        tlo, thi = iv.v_mul(w[..., i], w[..., i], box.lo[i], box.hi[i])
        lo, hi = iv.v_add(lo, hi, tlo, thi)
    return lo, hi


@dataclass(frozen=True)
class SplitGrid:
    """Axis-aligned tiling of a parameter box into equal-width cells."""

    box: ParamBox
    m: tuple
    cells: tuple

    def __len__(self) -> int:
        return len(self.cells)


def split(box: ParamBox, granularity) -> SplitGrid:
    """Tile the box with ceil(width / granularity) cells per dimension."""
    g = np.broadcast_to(np.asarray(granularity, float), (box.k,))
    if np.any(g <= 0) or not np.all(np.isfinite(g)):
        raise ValueError("granularity must be positive and finite")
    widths = box.hi - box.lo
    # snap near-integer ratios so 120deg / 2deg gives exactly 60 cells
    m = tuple(max(1, int(math.ceil(r - 1e-9))) for r in widths / g)
    edges = [np.linspace(box.lo[i], box.hi[i], m[i] + 1) for i in range(box.k)]
    cells = []
    for idx in itertools.product(*(range(mi) for mi in m)):
        lo = np.array([edges[i][j] for i, j in enumerate(idx)])
        hi = np.array([edges[i][j + 1] for i, j in enumerate(idx)])
        cells.append(ParamBox(lo, hi))
    return SplitGrid(box=box, m=m, cells=tuple(cells))


def _remainder_interval(spec: TransformSpec, pts: np.ndarray, box: ParamBox,
                        t: np.ndarray):
    """Interval Lagrange remainder per point and coordinate: (lo, hi) (n, 3)."""
    hlo, hhi = tf.hessian_params_interval_points(spec, pts, box)
    k = box.k
    # parameter offsets theta - t as outward-rounded intervals
    dlo = np.empty(k)
    dhi = np.empty(k)
    for i in range(k):
        dlo[i], dhi[i] = iv.v_sub(box.lo[i], box.hi[i], t[i], t[i])
    n = pts.shape[0]
    acc_lo = np.zeros((n, 3))
    acc_hi = np.zeros((n, 3))
    for i in range(k):
        for j in range(k):
            if i == j:
                clo, chi = iv.v_square(dlo[i], dhi[i])
            else:
                clo, chi = iv.v_mul(dlo[i], dhi[i], dlo[j], dhi[j])
            tlo, thi = iv.v_mul(clo, chi, hlo[:, :, i, j], hhi[:, :, i, j])
            acc_lo, acc_hi = iv.v_add(acc_lo, acc_hi, tlo, thi)
    return iv.v_scalar_mul(0.5, acc_lo, acc_hi)


def taylor_bounds_points(spec: TransformSpec, pts: np.ndarray,
                         box: ParamBox) -> LinearBounds:
    """Taylor enclosure on a raw (n, 3) coordinate array."""
    pts = np.asarray(pts, float)
    if box.k != spec.param_count:
        raise ValueError(
            f"{spec.kind} expects {spec.param_count} parameters, box has {box.k}")
    t = box.mid
    val = tf.apply_points(spec, pts, t)              # (n, 3)
    w = tf.jacobian_params_points(spec, pts, t)      # (n, 3, k)
    rlo, rhi = _remainder_interval(spec, pts, box, t)
    # intercept b = f(t) - w . t + R, accumulated as an interval so the
    # dot product's rounding is absorbed into [b_l, b_u]
    blo, bhi = np.array(val), np.array(val)
    for i in range(box.k):
        plo, phi = iv.v_mul(w[:, :, i], w[:, :, i], t[i], t[i])
        blo, bhi = iv.v_sub(blo, bhi, plo, phi)
    blo, bhi = iv.v_add(blo, bhi, rlo, rhi)
    return LinearBounds(w_l=w, b_l=blo, w_u=w.copy(), b_u=bhi, box=box)


def taylor_bounds(spec: TransformSpec, cloud: PointCloud, box: ParamBox) -> LinearBounds:
    """Sound affine enclosure of f(P, theta) coordinates over the box."""
    return taylor_bounds_points(spec, cloud.points, box)


def empirical_optimal_bounds(spec: TransformSpec, cloud: PointCloud, box: ParamBox,
                             samples: int, seed: int = 0) -> LinearBounds:
    """Tightest parallel-slope offsets enclosing sampled images.

    Shares the Taylor slope but fits intercepts to samples only, so it
    is a tightness reference, not a sound bound.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    pts = cloud.points
    t = box.mid
    w = tf.jacobian_params_points(spec, pts, t)
    thetas = sample_box(box, samples, seed)
    vals = tf.apply_points_batch(spec, pts, thetas)      # (S, n, 3)
    plane = np.tensordot(thetas, w, axes=(1, -1))        # (S, n, 3)
    resid = vals - plane
    return LinearBounds(w_l=w, b_l=resid.min(axis=0), w_u=w.copy(),
                        b_u=resid.max(axis=0), box=box)


def sample_box(box: ParamBox, samples: int, seed: int = 0) -> np.ndarray:
    """Corners, midpoint, per-axis grids, and uniform fill: (S, k)."""
    rng = np.random.default_rng(seed)
    chunks = [box.corners(), box.mid[None, :]]
    for i in range(box.k):
        axis = np.tile(box.mid, (25, 1))
        axis[:, i] = np.linspace(box.lo[i], box.hi[i], 25)
        chunks.append(axis)
    fixed = np.concatenate(chunks, axis=0)
    extra = max(0, samples - fixed.shape[0])
    if extra:
        chunks.append(rng.uniform(box.lo, box.hi, size=(extra, box.k)))
    return np.concatenate(chunks, axis=0)[:max(samples, fixed.shape[0])]
