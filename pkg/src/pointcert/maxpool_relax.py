"""Affine relaxations of y = max(x_1, ..., x_g) over box bounds.

Three strategies are provided. `interval` brackets the max between two
constants. `baseline` keeps the constant upper bound but uses the
identity of the input with the greatest lower bound as the lower bound.
`improved` first tries to prove one input dominates the others (then the
max is that input exactly), and otherwise replaces the constant upper
bound with the best upper facet of the convex hull of the branch
polytopes {l <= x <= u, x_i = max(x)} lifted by y = max(x).

The facets of that hull admit a closed form. Writing L = max_i l_i and
sorting the upper bounds, every upper facet is generated by a threshold
t: the facet through the part of the graph above level t,

    y <= sum_i a_i x_i + b,  a_i = (u_i - t) / (u_i - l_i) if u_i > t else 0,
    b = t - sum_i a_i l_i,

where t ranges over {L}, the distinct u_i strictly between L and
u_max = max_i u_i, and u_max itself exactly when two or more inputs
attain it (then the constant facet y <= u_max appears). When
u_max = L the hull degenerates to the single constant facet y <= L.
These facet sets were cross-checked exhaustively against a generic
convex-hull code on thousands of instances, including tied and
dominated bounds; enumerating them directly costs O(g log g) instead of
the exponential vertex hull and never degrades on degenerate geometry.

Full pools decompose into a balanced tree of small groups; each node is
relaxed independently, which is what makes group caps meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STRATEGIES = ("interval", "baseline", "improved")


@dataclass(frozen=True)
class MaxPoolConfig:
    strategy: str = "improved"
    group_size: int = 4
    cap: int = 10

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.cap < 2:
            raise ValueError("cap must be at least 2")
        if not 2 <= self.group_size <= self.cap:
            raise ValueError(
                f"group size {self.group_size} outside [2, cap={self.cap}]")


@dataclass(frozen=True)
class PoolGroup:
    """Bounded inputs to one max node; indices name them for the caller."""

    lo: np.ndarray
    hi: np.ndarray
    indices: tuple = None

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, float))
        hi = np.atleast_1d(np.asarray(self.hi, float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ValueError("group bounds must be matching 1-d arrays")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("group bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("group has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        idx = tuple(range(lo.size)) if self.indices is None else tuple(self.indices)
        if len(idx) != lo.size:
            raise ValueError("indices length does not match bounds")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return self.lo.size


@dataclass(frozen=True)
class HullCandidate:
    """One upper facet y <= coeffs . x + const with its box concretization."""

    coeffs: np.ndarray
    const: float
    conc_lo: float
    conc_hi: float

    @property
    def width(self) -> float:
        return self.conc_hi - self.conc_lo


def baseline_bounds(group: PoolGroup):
    """Identity-of-best-lower lower bound and constant upper bound."""
    g = group.size
    lower = np.zeros(g)
    lower[int(np.argmax(group.lo))] = 1.0
    return (lower, 0.0), (np.zeros(g), float(group.hi.max()))


def dominance_check(group: PoolGroup, diff_lower=None):
    """Index j with x_j >= x_i proven for all i, or None.

    The interval test l_j >= max u_i is tried first. If the caller
    supplies diff_lower(j, i) -> proven lower bound of x_j - x_i (for
    example by back-substituting the difference through the network),
    the input with the greatest lower bound is tested pairwise with it.
    """
    g = group.size
    if g == 1:
        return 0
    order = np.argsort(-group.hi, kind="stable")
    top, second = order[0], order[1]
    for j in range(g):
        other_max = group.hi[second] if j == top else group.hi[top]
        if group.lo[j] >= other_max:
            return j
    if diff_lower is None:
        return None
    j = int(np.argmax(group.lo))
    ji, idx = group.indices[j], group.indices
    if all(diff_lower(ji, idx[i]) >= 0.0 for i in range(g) if i != j):
        return j
    return None


def hull_candidates(lo, hi) -> list:
    """All upper facets of the lifted branch-polytope hull, closed form."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    g = lo.size
    big_l = float(lo.max())
    u_max = float(hi.max())
    if u_max <= big_l:
        return [HullCandidate(np.zeros(g), big_l, big_l, big_l)]
    thresholds = [big_l]
    interior = np.unique(hi[(hi > big_l) & (hi < u_max)])
    thresholds.extend(float(u) for u in interior)
    if int(np.sum(hi == u_max)) >= 2:
        thresholds.append(u_max)
    out = []
    for t in thresholds:
        active = hi > t
        coeffs = np.zeros(g)
        coeffs[active] = (hi[active] - t) / (hi[active] - lo[active])
        terms = [-coeffs[i] * lo[i] for i in range(g) if active[i]]
        mag = abs(t) + sum(abs(v) for v in terms)
        # nudge the intercept up a few ulps so the facet stays an upper
        # bound under floating-point evaluation at any feasible input
        const = math.fsum([t] + terms) + 4.0 * (g + 2) * np.spacing(mag)
        clo = math.fsum([const] + [coeffs[i] * lo[i] for i in range(g) if active[i]])
        chi = math.fsum([const] + [coeffs[i] * hi[i] for i in range(g) if active[i]])
        out.append(HullCandidate(coeffs, float(const), float(clo), float(chi)))
    return out


def hull_upper_bound(group: PoolGroup):
    """Minimum-width hull facet, or the constant u_max if none beats it."""
    cands = hull_candidates(group.lo, group.hi)
    best = min(cands, key=lambda c: (c.width, tuple(c.coeffs)))
    u_max = float(group.hi.max())
    if best.conc_hi < u_max + 0.01:
        return best.coeffs, best.const
    return np.zeros(group.size), u_max


@dataclass(frozen=True)
class GroupRelaxation:
    """Affine lower/upper bounds for one max node over its group inputs."""

    lower: tuple   # (coeffs, const)
    upper: tuple   # (coeffs, const)
    dominated: int = None  # group-local index when the max is exact


def relax_group(group: PoolGroup, config: MaxPoolConfig,
                diff_lower=None) -> GroupRelaxation:
    g = group.size
    if g > config.cap:
        raise ValueError(f"group of {g} exceeds cap {config.cap}")
    if g == 1:
        ident = (np.ones(1), 0.0)
        return GroupRelaxation(lower=ident, upper=ident, dominated=0)
    if config.strategy == "interval":
        zeros = np.zeros(g)
        return GroupRelaxation(lower=(zeros, float(group.lo.max())),
                               upper=(zeros.copy(), float(group.hi.max())))
    if config.strategy == "baseline":
        lower, upper = baseline_bounds(group)
        return GroupRelaxation(lower=lower, upper=upper)
    j = dominance_check(group, diff_lower)
    if j is not None:
        ident = np.zeros(g)
        ident[j] = 1.0
        return GroupRelaxation(lower=(ident, 0.0), upper=(ident.copy(), 0.0),
                               dominated=j)
    lower, _ = baseline_bounds(group)
    return GroupRelaxation(lower=lower, upper=hull_upper_bound(group))


def balanced_groups(n: int, group_size: int) -> list:
    """Contiguous index chunks of near-equal size, at most group_size each."""
    if n < 1:
        raise ValueError("need at least one input")
    count = math.ceil(n / group_size)
    base, extra = divmod(n, count)
    sizes = [base + 1] * extra + [base] * (count - extra)
    chunks = []
    start = 0
    for s in sizes:
        chunks.append(list(range(start, start + s)))
        start += s
    return chunks


def grouped_maxpool(lo, hi, config: MaxPoolConfig, diff_lower=None):
    """Relax max over n boxed inputs through a balanced group tree.

    Returns ((w_l, b_l), (w_u, b_u)) with weights over the original
    inputs. Upper-bound coefficients are nonnegative at every node, so
    substituting child upper bounds into parent upper bounds is sound,
    and lower bounds compose through identities and constants.
    """
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    n = lo.size
    nodes = [{"lo": lo[i], "hi": hi[i],
              "lower": (_unit(n, i), 0.0), "upper": (_unit(n, i), 0.0)}
             for i in range(n)]
    first_level = True
    while len(nodes) > 1:
        next_nodes = []
        for chunk in balanced_groups(len(nodes), config.group_size):
            members = [nodes[i] for i in chunk]
            glo = np.array([m["lo"] for m in members])
            ghi = np.array([m["hi"] for m in members])
            group = PoolGroup(glo, ghi, indices=tuple(chunk))
            rel = relax_group(group, config,
                              diff_lower if first_level else None)
            next_nodes.append({
                "lo": float(glo.max()), "hi": float(ghi.max()),
                "lower": _compose(rel.lower, [m["lower"] for m in members], n),
                "upper": _compose(rel.upper, [m["upper"] for m in members], n),
            })
        nodes = next_nodes
        first_level = False
    return nodes[0]["lower"], nodes[0]["upper"]


def _unit(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def _compose(expr, member_exprs, n):
    coeffs, const = expr
    w = np.zeros(n)
    b = float(const)
    for c, (mw, mb) in zip(coeffs, member_exprs):
        if c != 0.0:
            w += c * mw
            b += c * mb
    return w, b
