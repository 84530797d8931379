"""Sampling oracles: ground truth for bound soundness at desk scale.

Parameter boxes are probed with a scrambled Sobol sequence plus the box
corners, where transform extrema tend to sit. Transform bounds are
checked against exact applications; network bounds are checked against
forward passes on inputs drawn inside the abstraction; attacks search
for argmax flips the certifier claims cannot happen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import network as nw
from . import transforms as tf
from .taylor_relax import LinearBounds
from .transforms import ParamBox, PointCloud, TransformSpec

_CORNER_ENUM_MAX = 12   # enumerate all 2^k corners up to this k


@dataclass(frozen=True)
class SoundnessReport:
    """Outcome of a sampling check against claimed bounds."""

    samples: int
    violations: int
    worst: float      # largest excursion beyond a bound, 0.0 when sound
    max_slack: float  # loosest observed gap between a value and its bound

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass(frozen=True)
class AttackResult:
    """Worst sample found while searching for an argmax flip."""

    flipped: bool
    worst_theta: np.ndarray
    worst_margin: float
    samples: int


def sample_params(box: ParamBox, samples: int, seed: int = 0) -> np.ndarray:
    """Low-discrepancy samples of the box plus its corners, (S, k).

    All 2^k corners are appended for small k; beyond that a random
    subset of sign patterns stands in.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    k = box.k
    m = max(1, math.ceil(math.log2(samples)))
    u = qmc.Sobol(d=k, scramble=True, seed=seed).random_base2(m)[:samples]
    pts = box.lo + u * (box.hi - box.lo)
    if k <= _CORNER_ENUM_MAX:
        corners = box.corners()
    else:
        rng = np.random.default_rng(seed)
        signs = rng.integers(0, 2, size=(min(samples, 256), k))
        corners = np.where(signs == 1, box.hi, box.lo)
    return np.vstack([pts, corners, [box.mid]])


def check_transform_bounds(spec: TransformSpec, cloud: PointCloud,
                           box: ParamBox, bounds: LinearBounds,
                           samples: int = 1000, seed: int = 0,
                           tol: float = 1e-9) -> SoundnessReport:
    """Validate affine parameter bounds against exact transform values."""
    thetas = sample_params(box, samples, seed)
    vals = tf.apply_points_batch(spec, cloud.points, thetas)
    lower, upper = bounds.evaluate(thetas)
    over = vals - upper
    under = lower - vals
    excess = np.maximum(np.maximum(over, under), 0.0)
    violations = int(np.count_nonzero(excess > tol))
    worst = float(excess.max(initial=0.0))
    slack = max(float(np.max(upper - vals)), float(np.max(vals - lower)), 0.0)
    return SoundnessReport(samples=thetas.shape[0], violations=violations,
                           worst=worst, max_slack=slack)


def check_network_bounds(model: nw.Model, input_abs, propagation,
                         samples: int = 200, seed: int = 0,
                         tol: float = 1e-9) -> SoundnessReport:
    """Validate per-layer concrete bounds against sampled forward passes.

    Inputs are drawn from the abstraction itself: a parameter sample
    fixes the affine input bounds, and coordinates are interpolated
    between them (endpoints included), so every sample the verifier
    must cover is fair game.
    """
    b = input_abs.bounds
    thetas = sample_params(b.box, samples, seed)
    lower, upper = b.evaluate(thetas)       # (S, 3n)
    rng = np.random.default_rng(seed)
    n = input_abs.n
    count = 0
    violations = 0
    worst = 0.0
    slack = 0.0
    concrete = {l.id: propagation.concrete(l.id) for l in model.layers}
    for s in range(thetas.shape[0]):
        r = rng.uniform(0.0, 1.0, size=3 * n)
        if s % 3 == 1:
            r[:] = 0.0
        elif s % 3 == 2:
            r[:] = 1.0
        x = (lower[s] + r * (upper[s] - lower[s])).reshape(n, 3)
        vals = nw.forward_layers(model, x)
        count += 1
        for lid, (clo, chi) in concrete.items():
            v = np.asarray(vals[lid], float).reshape(-1)
            excess = max(float(np.max(v - chi)), float(np.max(clo - v)), 0.0)
            if excess > tol:
                violations += 1
            worst = max(worst, excess)
            slack = max(slack, float(np.max(chi - v)), float(np.max(v - clo)))
    return SoundnessReport(samples=count, violations=violations,
                           worst=worst, max_slack=slack)


def empirical_attack(model: nw.Model, cloud: PointCloud, spec, box: ParamBox,
                     samples: int = 10000, seed: int = 0,
                     target: int = None) -> AttackResult:
    """Search sampled parameters for one that flips the argmax.

    spec=None treats the box as a per-coordinate box over the flattened
    cloud (an epsilon ball), matching linf_input.
    """
    logits0 = nw.forward(model, cloud)
    tgt = int(np.argmax(logits0)) if target is None else int(target)
    thetas = sample_params(box, samples, seed)
    if spec is not None:
        clouds = tf.apply_points_batch(spec, cloud.points, thetas)
    else:
        clouds = thetas.reshape(thetas.shape[0], len(cloud), 3)
    logits = nw.forward_batch(model, clouds)
    others = np.delete(logits, tgt, axis=1)
    margins = logits[:, tgt] - others.max(axis=1)
    worst = int(np.argmin(margins))
    return AttackResult(flipped=bool(margins[worst] <= 0.0),
                        worst_theta=thetas[worst],
                        worst_margin=float(margins[worst]),
                        samples=thetas.shape[0])


def attack_segmentation(model: nw.Model, cloud: PointCloud, labels, spec,
                        box: ParamBox, samples: int = 1000,
                        seed: int = 0) -> np.ndarray:
    """Per-point flag: was the point's label ever lost over the samples?"""
    labels = np.asarray(labels, dtype=int)
    thetas = sample_params(box, samples, seed)
    clouds = tf.apply_points_batch(spec, cloud.points, thetas)
    logits = nw.forward_batch(model, clouds)      # (S, n, parts)
    preds = np.argmax(logits, axis=2)
    return np.any(preds != labels[None, :], axis=0)
