"""Parameterized 3D point transformations and their derivatives.

Each transformation maps a point p = (x, y, z) and a parameter vector
theta to a new point. Alongside plain evaluation every transformation
exposes exact first and second order derivatives with respect to both
theta and p, evaluated either on concrete floats or on intervals. The
interval route is what makes Lagrange remainder bounding sound, and the
point/mixed second derivatives are what chained transformations need:
the inner stage's output enters the outer stage's derivatives as an
interval-valued point.

All derivative formulas are hand-derived closed forms, cross-checked
against central finite differences in the test suite.

Composite transformations are listed innermost-first: ``parts[0]`` is
applied to the point first, and the parameter vector is the innermost
part's parameters followed by the next part's, and so on. The textual
syntax ``a*b`` follows function-composition order, so ``b`` applies
first.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import interval as iv
from .interval import Interval

_ATOMIC_PARAMS = {
    "rotx": 1,
    "roty": 1,
    "rotz": 1,
    "shear": 2,
    "twist": 1,
    "taper": 2,
}
_SUGAR = {"rotzx": ("rotz", "rotx"), "rotzyx": ("rotz", "roty", "rotx")}
KINDS = tuple(_ATOMIC_PARAMS) + tuple(_SUGAR) + ("compose",)


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(float(v)):
                raise ValueError(f"non-finite point coordinate {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3) float64

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"point cloud must be (n, 3) with n >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    parts: tuple["TransformSpec", ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transformation kind {self.kind!r}")
        if self.kind == "compose":
            if len(self.parts) < 1:
                raise ValueError("compose requires at least one part")
        elif self.parts:
            raise ValueError(f"{self.kind!r} takes no parts")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def param_count(self) -> int:
        if self.kind in _ATOMIC_PARAMS:
            return _ATOMIC_PARAMS[self.kind]
        if self.kind in _SUGAR:
            return len(_SUGAR[self.kind])
        return sum(p.param_count for p in self.parts)

    def stages(self) -> list[str]:
        """Flatten to atomic stage kinds, innermost first."""
        if self.kind in _ATOMIC_PARAMS:
            return [self.kind]
        if self.kind in _SUGAR:
            return list(_SUGAR[self.kind])
        out: list[str] = []
        for p in self.parts:
            out.extend(p.stages())
        return out

    def __str__(self) -> str:
        stages = self.stages()
        return "*".join(reversed(stages)) if len(stages) > 1 else stages[0]


@dataclass(frozen=True)
class ParamBox:
    lo: np.ndarray  # (k,)
    hi: np.ndarray  # (k,)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("parameter box bounds must be 1-d and of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("parameter box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("parameter box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def k(self) -> int:
        return self.lo.shape[0]

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def corners(self) -> np.ndarray:
        """(2^k, k) array of all corner parameter vectors."""
        if self.k == 0:
            return np.zeros((1, 0))
        grid = np.meshgrid(*[[l, h] for l, h in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)


def parse_transform(text: str) -> TransformSpec:
    """Parse ``a*b`` syntax; the rightmost factor is applied first."""
    names = [t.strip().lower() for t in text.split("*")]
    if any(not n for n in names):
        raise ValueError(f"malformed transformation expression {text!r}")
    specs = []
    for n in reversed(names):  # rightmost applies first, so it is innermost
        if n not in KINDS or n == "compose":
            raise ValueError(f"unknown transformation {n!r}")
        specs.append(TransformSpec(n))
    if len(specs) == 1:
        return specs[0]
    return TransformSpec("compose", tuple(specs))


_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?(?:\s*deg)?"
_RANGE_RE = re.compile(rf"^(?P<lo>{_NUM})\s*\.\.\s*(?P<hi>{_NUM})$")


def parse_angle_value(text: str) -> float:
    """Parse a number with optional ``deg`` suffix into radians/raw units."""
    t = text.strip().lower()
    if t.endswith("deg"):
        return math.radians(float(t[:-3]))
    return float(t)


def parse_param_box(text: str, k: int) -> ParamBox:
    """Parse comma-separated per-parameter ``min..max`` ranges."""
    tokens = [t for t in text.split(",") if t.strip()]
    if len(tokens) != k:
        raise ValueError(f"expected {k} parameter range(s), got {len(tokens)} in {text!r}")
    lo, hi = [], []
    for tok in tokens:
        m = _RANGE_RE.match(tok.strip())
        if not m:
            raise ValueError(f"malformed range {tok!r}, expected min..max")
        lo.append(parse_angle_value(m.group("lo")))
        hi.append(parse_angle_value(m.group("hi")))
    return ParamBox(np.array(lo), np.array(hi))


class _FloatOps:
    """Plain float64 arithmetic for derivative jets."""

    @staticmethod
    def const(c):
        return float(c)

    @staticmethod
    def add(a, b):
        return np.add(a, b)

    @staticmethod
    def sub(a, b):
        return np.subtract(a, b)

    @staticmethod
    def mul(a, b):
        return np.multiply(a, b)

    @staticmethod
    def neg(a):
        return np.negative(a)

    @staticmethod
    def smul(c, a):
        return np.multiply(c, a)

    @staticmethod
    def sin(a):
        return np.sin(a)

    @staticmethod
    def cos(a):
        return np.cos(a)

    @staticmethod
    def square(a):
        return np.square(a)

    @staticmethod
    def to_array(cell, shape):
        return np.broadcast_to(np.asarray(cell, float), shape)


class _IntervalOps:
    """(lo, hi) pair arithmetic for derivative jets."""

    @staticmethod
    def const(c):
        return (float(c), float(c))

    @staticmethod
    def add(a, b):
        return iv.v_add(a[0], a[1], b[0], b[1])

    @staticmethod
    def sub(a, b):
        return iv.v_sub(a[0], a[1], b[0], b[1])

    @staticmethod
    def mul(a, b):
        return iv.v_mul(a[0], a[1], b[0], b[1])

    @staticmethod
    def neg(a):
        return iv.v_neg(a[0], a[1])

    @staticmethod
    def smul(c, a):
        return iv.v_scalar_mul(c, a[0], a[1])

    @staticmethod
    def sin(a):
        return iv.v_sin(a[0], a[1])

    @staticmethod
    def cos(a):
        return iv.v_cos(a[0], a[1])

    @staticmethod
    def square(a):
        return iv.v_square(a[0], a[1])

    @staticmethod
    def to_array(cell, shape):
        return (np.broadcast_to(np.asarray(cell[0], float), shape),
                np.broadcast_to(np.asarray(cell[1], float), shape))


class _Jet:
    """Value and derivative cells of one transformation stage.

    val: [3] output coordinates
    jp:  [3][3]     d out_o / d p_m
    jt:  [3][k]     d out_o / d theta_a
    htt: [3][k][k]  d2 out_o / d theta_a d theta_b
    hpp: [3][3][3]  d2 out_o / d p_m d p_n
    hpt: [3][3][k]  d2 out_o / d p_m d theta_a
    """

    __slots__ = ("val", "jp", "jt", "htt", "hpp", "hpt", "k")

    def __init__(self, val, jp=None, jt=None, htt=None, hpp=None, hpt=None, k=0):
        self.val = val
        self.jp = jp
        self.jt = jt
        self.htt = htt
        self.hpp = hpp
        self.hpt = hpt
        self.k = k


def _zeros(ops, *dims):
    z = ops.const(0.0)

    def build(ds):
        if len(ds) == 1:
            return [z for _ in range(ds[0])]
        return [build(ds[1:]) for _ in range(ds[0])]

    return build(list(dims)) if dims else z


def _jet_rotz(ops, p, th, order):
    x, y, z = p
    (t,) = th
    c, s = ops.cos(t), ops.sin(t)
    a = ops.sub(ops.mul(x, c), ops.mul(y, s))  # x'
    b = ops.add(ops.mul(x, s), ops.mul(y, c))  # y'
    zero = ops.const(0.0)
    one = ops.const(1.0)
    jet = _Jet([a, b, z], k=1)
    if order >= 1:
        jet.jp = [[c, ops.neg(s), zero], [s, c, zero], [zero, zero, one]]
        jet.jt = [[ops.neg(b)], [a], [zero]]
    if order >= 2:
        jet.htt = [[[ops.neg(a)]], [[ops.neg(b)]], [[zero]]]
        jet.hpp = _zeros(ops, 3, 3, 3)
        jet.hpt = [[[ops.neg(s)], [ops.neg(c)], [zero]],
                   [[c], [ops.neg(s)], [zero]],
                   [[zero], [zero], [zero]]]
    return jet


def _jet_rotx(ops, p, th, order):
    x, y, z = p
    (t,) = th
    c, s = ops.cos(t), ops.sin(t)
    a = ops.sub(ops.mul(y, c), ops.mul(z, s))  # y'
    b = ops.add(ops.mul(y, s), ops.mul(z, c))  # z'
    zero = ops.const(0.0)
    one = ops.const(1.0)
    jet = _Jet([x, a, b], k=1)
    if order >= 1:
        jet.jp = [[one, zero, zero], [zero, c, ops.neg(s)], [zero, s, c]]
        jet.jt = [[zero], [ops.neg(b)], [a]]
    if order >= 2:
        jet.htt = [[[zero]], [[ops.neg(a)]], [[ops.neg(b)]]]
        jet.hpp = _zeros(ops, 3, 3, 3)
        jet.hpt = [[[zero], [zero], [zero]],
                   [[zero], [ops.neg(s)], [ops.neg(c)]],
                   [[zero], [c], [ops.neg(s)]]]
    return jet


def _jet_roty(ops, p, th, order):
    x, y, z = p
    (t,) = th
    c, s = ops.cos(t), ops.sin(t)
    a = ops.add(ops.mul(x, c), ops.mul(z, s))  # x'
    b = ops.sub(ops.mul(z, c), ops.mul(x, s))  # z'
    zero = ops.const(0.0)
    one = ops.const(1.0)
    jet = _Jet([a, y, b], k=1)
    if order >= 1:
        jet.jp = [[c, zero, s], [zero, one, zero], [ops.neg(s), zero, c]]
        jet.jt = [[b], [zero], [ops.neg(a)]]
    if order >= 2:
        jet.htt = [[[ops.neg(a)]], [[zero]], [[ops.neg(b)]]]
        jet.hpp = _zeros(ops, 3, 3, 3)
        jet.hpt = [[[ops.neg(s)], [zero], [c]],
                   [[zero], [zero], [zero]],
                   [[ops.neg(c)], [zero], [ops.neg(s)]]]
    return jet


def _jet_shear(ops, p, th, order):
    x, y, z = p
    t1, t2 = th
    zero = ops.const(0.0)
    one = ops.const(1.0)
    jet = _Jet([ops.add(x, ops.mul(t1, z)), ops.add(y, ops.mul(t2, z)), z], k=2)
    if order >= 1:
        jet.jp = [[one, zero, t1], [zero, one, t2], [zero, zero, one]]
        jet.jt = [[z, zero], [zero, z], [zero, zero]]
    if order >= 2:
        jet.htt = _zeros(ops, 3, 2, 2)
        jet.hpp = _zeros(ops, 3, 3, 3)
        jet.hpt = _zeros(ops, 3, 3, 2)
        jet.hpt[0][2][0] = one
        jet.hpt[1][2][1] = one
    return jet


def _jet_twist(ops, p, th, order):
    x, y, z = p
    (t,) = th
    alpha = ops.mul(t, z)
    c, s = ops.cos(alpha), ops.sin(alpha)
    a = ops.sub(ops.mul(x, c), ops.mul(y, s))
    b = ops.add(ops.mul(x, s), ops.mul(y, c))
    zero = ops.const(0.0)
    one = ops.const(1.0)
    jet = _Jet([a, b, z], k=1)
    if order >= 1:
        zb = ops.mul(z, b)
        za = ops.mul(z, a)
        jet.jp = [[c, ops.neg(s), ops.neg(ops.mul(t, b))],
                  [s, c, ops.mul(t, a)],
                  [zero, zero, one]]
        jet.jt = [[ops.neg(zb)], [za], [zero]]
    if order >= 2:
        z2 = ops.square(z)
        t2 = ops.square(t)
        jet.htt = [[[ops.neg(ops.mul(z2, a))]], [[ops.neg(ops.mul(z2, b))]], [[zero]]]
        ts = ops.mul(t, s)
        tc = ops.mul(t, c)
        jet.hpp = [
            [[zero, zero, ops.neg(ts)],
             [zero, zero, ops.neg(tc)],
             [ops.neg(ts), ops.neg(tc), ops.neg(ops.mul(t2, a))]],
            [[zero, zero, tc],
             [zero, zero, ops.neg(ts)],
             [tc, ops.neg(ts), ops.neg(ops.mul(t2, b))]],
            _zeros(ops, 3, 3),
        ]
        zta = ops.mul(z, ops.mul(t, a))
        ztb = ops.mul(z, ops.mul(t, b))
        jet.hpt = [
            [[ops.neg(ops.mul(z, s))], [ops.neg(ops.mul(z, c))],
             [ops.neg(ops.add(b, zta))]],
            [[ops.mul(z, c)], [ops.neg(ops.mul(z, s))],
             [ops.sub(a, ztb)]],
            [[zero], [zero], [zero]],
        ]
    return jet


def _jet_taper(ops, p, th, order):
    x, y, z = p
    t1, t2 = th
    half_t1sq = ops.smul(0.5, ops.square(t1))
    q = ops.add(half_t1sq, t2)             # d a / d z
    a = ops.add(ops.mul(q, z), ops.const(1.0))  # 0.5 t1^2 z + t2 z + 1
    zero = ops.const(0.0)
    one = ops.const(1.0)
    jet = _Jet([ops.mul(a, x), ops.mul(a, y), z], k=2)
    if order >= 1:
        zx = ops.mul(z, x)
        zy = ops.mul(z, y)
        jet.jp = [[a, zero, ops.mul(q, x)], [zero, a, ops.mul(q, y)], [zero, zero, one]]
        jet.jt = [[ops.mul(t1, zx), zx], [ops.mul(t1, zy), zy], [zero, zero]]
    if order >= 2:
        zx = ops.mul(z, x)
        zy = ops.mul(z, y)
        jet.htt = [[[zx, zero], [zero, zero]],
                   [[zy, zero], [zero, zero]],
                   _zeros(ops, 2, 2)]
        jet.hpp = [
            [[zero, zero, q], [zero, zero, zero], [q, zero, zero]],
            [[zero, zero, zero], [zero, zero, q], [zero, q, zero]],
            _zeros(ops, 3, 3),
        ]
        t1z = ops.mul(t1, z)
        jet.hpt = [
            [[t1z, z], [zero, zero], [ops.mul(t1, x), x]],
            [[zero, zero], [t1z, z], [ops.mul(t1, y), y]],
            _zeros(ops, 3, 2),
        ]
    return jet


_ATOMIC_JETS = {
    "rotx": _jet_rotx,
    "roty": _jet_roty,
    "rotz": _jet_rotz,
    "shear": _jet_shear,
    "twist": _jet_twist,
    "taper": _jet_taper,
}


def _dot3(ops, coeffs, vals):
    acc = ops.mul(coeffs[0], vals[0])
    for c, v in zip(coeffs[1:], vals[1:]):
        acc = ops.add(acc, ops.mul(c, v))
    return acc


def _combine(ops, f: _Jet, g: _Jet, order: int) -> _Jet:
    """Chain rule for h = g(f(p, phi), psi); theta = (phi, psi)."""
    kf, kg = f.k, g.k
    out = _Jet(g.val, k=kf + kg)
    if order >= 1:
        out.jp = [[_dot3(ops, g.jp[o], [f.jp[0][c], f.jp[1][c], f.jp[2][c]])
                   for c in range(3)] for o in range(3)]
        out.jt = [[_dot3(ops, g.jp[o], [f.jt[0][a], f.jt[1][a], f.jt[2][a]])
                   for a in range(kf)] + list(g.jt[o]) for o in range(3)]
    if order >= 2:
        out.htt = []
        out.hpp = []
        out.hpt = []
        for o in range(3):
            gu = g.jp[o]       # [3] d g_o / d u_m
            guu = g.hpp[o]     # [3][3]
            gut = g.hpt[o]     # [3][kg]
            gtt = g.htt[o]     # [kg][kg]
            htt = [[None] * (kf + kg) for _ in range(kf + kg)]
            for a in range(kf):
                for b in range(kf):
                    acc = _dot3(ops, gu, [f.htt[0][a][b], f.htt[1][a][b], f.htt[2][a][b]])
                    for m in range(3):
                        for n in range(3):
                            acc = ops.add(acc, ops.mul(guu[m][n],
                                                       ops.mul(f.jt[m][a], f.jt[n][b])))
                    htt[a][b] = acc
            for a in range(kf):
                for cpsi in range(kg):
                    acc = ops.const(0.0)
                    for m in range(3):
                        acc = ops.add(acc, ops.mul(gut[m][cpsi], f.jt[m][a]))
                    htt[a][kf + cpsi] = acc
                    htt[kf + cpsi][a] = acc
            for cpsi in range(kg):
                for dpsi in range(kg):
                    htt[kf + cpsi][kf + dpsi] = gtt[cpsi][dpsi]
            out.htt.append(htt)

            hpp = [[None] * 3 for _ in range(3)]
            for c in range(3):
                for d in range(3):
                    acc = _dot3(ops, gu, [f.hpp[0][c][d], f.hpp[1][c][d], f.hpp[2][c][d]])
                    for m in range(3):
                        for n in range(3):
                            acc = ops.add(acc, ops.mul(guu[m][n],
                                                       ops.mul(f.jp[m][c], f.jp[n][d])))
                    hpp[c][d] = acc
            out.hpp.append(hpp)

            hpt = [[None] * (kf + kg) for _ in range(3)]
            for c in range(3):
                for a in range(kf):
                    acc = _dot3(ops, gu, [f.hpt[0][c][a], f.hpt[1][c][a], f.hpt[2][c][a]])
                    for m in range(3):
                        for n in range(3):
                            acc = ops.add(acc, ops.mul(guu[m][n],
                                                       ops.mul(f.jp[m][c], f.jt[n][a])))
                    hpt[c][a] = acc
                for cpsi in range(kg):
                    acc = ops.const(0.0)
                    for m in range(3):
                        acc = ops.add(acc, ops.mul(gut[m][cpsi], f.jp[m][c]))
                    hpt[c][kf + cpsi] = acc
            out.hpt.append(hpt)
    return out


def _jet(spec: TransformSpec, ops, p_cells, th_cells, order: int) -> _Jet:
    stages = spec.stages()
    ks = [_ATOMIC_PARAMS[s] for s in stages]
    if sum(ks) != len(th_cells):
        raise ValueError(f"expected {sum(ks)} parameters, got {len(th_cells)}")
    pos = 0
    jet = None
    for stage, k in zip(stages, ks):
        builder = _ATOMIC_JETS[stage]
        cells = th_cells[pos:pos + k]
        pos += k
        if jet is None:
            jet = builder(ops, p_cells, cells, order)
        else:
            outer = builder(ops, jet.val, cells, order)
            jet = _combine(ops, jet, outer, order)
    return jet


def _check_theta(spec: TransformSpec, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.shape != (spec.param_count,):
        raise ValueError(
            f"{spec.kind} expects {spec.param_count} parameter(s), got shape {theta.shape}")
    return theta


def _float_jet_cloud(spec: TransformSpec, pts: np.ndarray, theta: np.ndarray,
                     order: int) -> _Jet:
    p_cells = [pts[..., 0], pts[..., 1], pts[..., 2]]
    th_cells = [float(t) for t in theta]
    return _jet(spec, _FloatOps, p_cells, th_cells, order)


def apply(spec: TransformSpec, p: Point3, theta) -> Point3:
    theta = _check_theta(spec, theta)
    jet = _float_jet_cloud(spec, p.as_array(), theta, order=0)
    return Point3(float(jet.val[0]), float(jet.val[1]), float(jet.val[2]))


def apply_cloud(spec: TransformSpec, cloud: PointCloud, theta) -> PointCloud:
    theta = _check_theta(spec, theta)
    jet = _float_jet_cloud(spec, cloud.points, theta, order=0)
    n = len(cloud)
    out = np.stack([_FloatOps.to_array(v, (n,)) for v in jet.val], axis=-1)
    return PointCloud(out)


def apply_points(spec: TransformSpec, pts: np.ndarray, theta) -> np.ndarray:
    """Vectorized apply on a raw (..., 3) coordinate array."""
    theta = _check_theta(spec, theta)
    jet = _float_jet_cloud(spec, np.asarray(pts, float), theta, order=0)
    shape = np.asarray(pts).shape[:-1]
    return np.stack([_FloatOps.to_array(v, shape) for v in jet.val], axis=-1)


def apply_points_batch(spec: TransformSpec, pts: np.ndarray,
                       thetas: np.ndarray) -> np.ndarray:
    """Apply a batch of parameter vectors: (n,3) x (S,k) -> (S,n,3)."""
    pts = np.asarray(pts, float)
    thetas = np.asarray(thetas, float)
    if thetas.ndim != 2 or thetas.shape[1] != spec.param_count:
        raise ValueError(f"theta batch must be (S, {spec.param_count})")
    p_cells = [pts[None, :, 0], pts[None, :, 1], pts[None, :, 2]]
    th_cells = [thetas[:, i:i + 1] for i in range(thetas.shape[1])]
    jet = _jet(spec, _FloatOps, p_cells, th_cells, order=0)
    shape = (thetas.shape[0], pts.shape[0])
    return np.stack([_FloatOps.to_array(v, shape) for v in jet.val], axis=-1)


def _jac_arrays(spec: TransformSpec, pts: np.ndarray, theta) -> _Jet:
    theta = _check_theta(spec, theta)
    return _float_jet_cloud(spec, np.asarray(pts, float), theta, order=1)


def jacobian_point(spec: TransformSpec, p: Point3, theta) -> np.ndarray:
    jet = _jac_arrays(spec, p.as_array(), theta)
    return np.array([[float(jet.jp[o][c]) for c in range(3)] for o in range(3)])


def jacobian_params(spec: TransformSpec, p: Point3, theta) -> np.ndarray:
    jet = _jac_arrays(spec, p.as_array(), theta)
    k = spec.param_count
    return np.array([[float(jet.jt[o][a]) for a in range(k)] for o in range(3)])


def jacobian_params_points(spec: TransformSpec, pts: np.ndarray, theta) -> np.ndarray:
    """Vectorized parameter Jacobians: (n, 3) -> (n, 3, k)."""
    pts = np.asarray(pts, float)
    jet = _jac_arrays(spec, pts, theta)
    n, k = pts.shape[0], spec.param_count
    rows = [[_FloatOps.to_array(jet.jt[o][a], (n,)) for a in range(k)] for o in range(3)]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=1)


def _interval_cells_from_box(box: ParamBox):
    return [(float(box.lo[i]), float(box.hi[i])) for i in range(box.k)]


def hessian_params_interval_points(spec: TransformSpec, pts: np.ndarray,
                                   box: ParamBox):
    """Interval enclosures of all parameter Hessians over the box.

    Returns (lo, hi) arrays of shape (n, 3, k, k) for a (n, 3) input.
    """
    pts = np.asarray(pts, float)
    if box.k != spec.param_count:
        raise ValueError(f"{spec.kind} expects {spec.param_count} parameters, box has {box.k}")
    n, k = pts.shape[0], spec.param_count
    p_cells = [(pts[:, 0], pts[:, 0]), (pts[:, 1], pts[:, 1]), (pts[:, 2], pts[:, 2])]
    jet = _jet(spec, _IntervalOps, p_cells, _interval_cells_from_box(box), order=2)
    lo = np.empty((n, 3, k, k))
    hi = np.empty((n, 3, k, k))
    for o in range(3):
        for a in range(k):
            for b in range(k):
                clo, chi = _IntervalOps.to_array(jet.htt[o][a][b], (n,))
                lo[:, o, a, b] = clo
                hi[:, o, a, b] = chi
    return lo, hi


def hessian_params_interval(spec: TransformSpec, p: Point3, box: ParamBox):
    """Per output coordinate, the k x k interval Hessian enclosure."""
    lo, hi = hessian_params_interval_points(spec, p.as_array()[None, :], box)
    k = spec.param_count
    return [[[Interval(lo[0, o, a, b], hi[0, o, a, b]) for b in range(k)]
             for a in range(k)] for o in range(3)]
