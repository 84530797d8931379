"""Sound closed-interval arithmetic on IEEE doubles.

Endpoints are computed in round-to-nearest and then widened outward by a
fixed 4 ulps per endpoint, which dominates the rounding error of every
primitive used here (elementary arithmetic is within 0.5 ulp, library
sin/cos within a couple of ulps). Exact-zero endpoints are kept at zero:
the primitives below only produce a zero endpoint when the true endpoint
is zero (products that underflow to zero are bumped to the smallest
subnormal first), so skipping the widening there is sound and preserves
identities such as additive constants staying exact.

Two layers share one implementation: a vectorized core operating on
(lo, hi) ndarray pairs, and the scalar `Interval` class wrapping it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_WIDEN_ULPS = 4.0
_TINY = 5e-324  # smallest subnormal; stands in for products underflowing to 0
_TWO_PI = 2.0 * math.pi
_HALF_PI = 0.5 * math.pi
_PHASE_SLACK = 1e-12  # widening of the 2*pi phase reduction, toward inclusion


def _widen_down(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x == 0.0, 0.0, x - _WIDEN_ULPS * np.spacing(np.abs(x)))


def _widen_up(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x == 0.0, 0.0, x + _WIDEN_ULPS * np.spacing(np.abs(x)))


def _prod(a, b):
    """Elementwise product with zero-underflow bumped to a signed subnormal."""
    p = a * b
    under = (p == 0.0) & (a != 0.0) & (b != 0.0)
    if np.any(under):
        p = np.where(under, np.copysign(_TINY, a) * np.copysign(1.0, b), p)
    return p


def v_neg(lo, hi):
    return -np.asarray(hi, float), -np.asarray(lo, float)


def v_add(alo, ahi, blo, bhi):
    alo = np.asarray(alo, float)
    ahi = np.asarray(ahi, float)
    blo = np.asarray(blo, float)
    bhi = np.asarray(bhi, float)
    with np.errstate(over="ignore", invalid="ignore"):
        lo = alo + blo
        hi = ahi + bhi
        # adding an exact zero is exact, so the widening can be skipped there
        lo = np.where((alo == 0.0) | (blo == 0.0), lo, _widen_down(lo))
        hi = np.where((ahi == 0.0) | (bhi == 0.0), hi, _widen_up(hi))
    return lo, hi


def v_sub(alo, ahi, blo, bhi):
    nlo, nhi = v_neg(blo, bhi)
    return v_add(alo, ahi, nlo, nhi)


def v_mul(alo, ahi, blo, bhi):
    alo = np.asarray(alo, float)
    ahi = np.asarray(ahi, float)
    blo = np.asarray(blo, float)
    bhi = np.asarray(bhi, float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        p1 = _prod(alo, blo)
        p2 = _prod(alo, bhi)
        p3 = _prod(ahi, blo)
        p4 = _prod(ahi, bhi)
        lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
        hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
        return _widen_down(lo), _widen_up(hi)


def v_scalar_mul(c, blo, bhi):
    c = np.asarray(c, float)
    return v_mul(c, c, blo, bhi)


def v_square(alo, ahi):
    alo = np.asarray(alo, float)
    ahi = np.asarray(ahi, float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        l2 = _prod(alo, alo)
        h2 = _prod(ahi, ahi)
        straddle = (alo < 0.0) & (ahi > 0.0)
        lo = np.where(straddle, 0.0, _widen_down(np.minimum(l2, h2)))
        hi = _widen_up(np.maximum(l2, h2))
        return lo, hi


def _contains_phase(lo, hi, phase):
    """True where some ``phase + 2k*pi`` lies in [lo, hi].

    The reduction is widened toward inclusion by a fixed slack plus an
    ulp-accurate guard so borderline cases count as contained.
    """
    a = (np.asarray(lo, float) - phase) / _TWO_PI
    b = (np.asarray(hi, float) - phase) / _TWO_PI
    slack = _PHASE_SLACK + 4.0 * np.spacing(np.maximum(np.abs(a), np.abs(b)))
    return np.floor(b + slack) >= np.ceil(a - slack)


def _v_trig(lo, hi, fn, peak_phase):
    va = fn(np.asarray(lo, float))
    vb = fn(np.asarray(hi, float))
    out_lo = _widen_down(np.minimum(va, vb))
    out_hi = _widen_up(np.maximum(va, vb))
    out_lo = np.where(_contains_phase(lo, hi, peak_phase + math.pi), -1.0, out_lo)
    out_hi = np.where(_contains_phase(lo, hi, peak_phase), 1.0, out_hi)
    return np.clip(out_lo, -1.0, 1.0), np.clip(out_hi, -1.0, 1.0)


def v_sin(lo, hi):
    return _v_trig(lo, hi, np.sin, _HALF_PI)


def v_cos(lo, hi):
    return _v_trig(lo, hi, np.cos, 0.0)


@dataclass(frozen=True)
class Interval:
    """Closed real interval [lo, hi] with finite endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        lo = float(self.lo)
        hi = float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"interval endpoints must be finite, got [{lo}, {hi}]")
        if lo > hi:
            raise ValueError(f"inverted interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack


def _wrap(lo, hi) -> Interval:
    return Interval(float(lo), float(hi))


def neg(a: Interval) -> Interval:
    return _wrap(*v_neg(a.lo, a.hi))


def add(a: Interval, b: Interval) -> Interval:
    return _wrap(*v_add(a.lo, a.hi, b.lo, b.hi))


def sub(a: Interval, b: Interval) -> Interval:
    return _wrap(*v_sub(a.lo, a.hi, b.lo, b.hi))


def mul(a: Interval, b: Interval) -> Interval:
    return _wrap(*v_mul(a.lo, a.hi, b.lo, b.hi))


def scalar_mul(c: float, b: Interval) -> Interval:
    if not math.isfinite(c):
        raise ValueError(f"scalar must be finite, got {c}")
    return _wrap(*v_scalar_mul(c, b.lo, b.hi))


def sin(a: Interval) -> Interval:
    return _wrap(*v_sin(a.lo, a.hi))


def cos(a: Interval) -> Interval:
    return _wrap(*v_cos(a.lo, a.hi))


def square(a: Interval) -> Interval:
    return _wrap(*v_square(a.lo, a.hi))
