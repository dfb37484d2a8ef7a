"""The many-to-one random walk (the spine) and statistics along it.

At a parameter where E[sum |L(u)|^alpha] = 1 the tilted step law
P(S_1 in A) = E[sum_{|u|=1} |L(u)|^alpha 1{-log|L(u)| in A}] is a probability
measure.  For the Gaussian binary model the tilted step is explicit; for any
other model paths are drawn by resampling a child proportionally to
|L|^alpha and carry the importance weight sum |L|^alpha.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import charfun
from .exceptions import MonotonicityViolation, NotNormalized
from .models import GaussianBinary
from .tvfun import TVFunction, _log_ell, select_u0
from ._validation import as_lambda, check_count, check_random_state

NORMALIZATION_TOL = 1e-8
CLOSED_FORM = "ClosedForm"
WEIGHTED_RESAMPLING = "WeightedResampling"


def _check_tilt(model, lam, alpha, tol=NORMALIZATION_TOL):
    f = charfun.f_ratio(model, lam, alpha)
    if not isinstance(f, float) or abs(f - 1.0) > tol:
        raise NotNormalized(f"f({alpha}) = {f!r} at lambda={lam}; the tilted law is not normalized")
    labs = float(model.log_abs_m(np.array([lam]))[0])
    return labs


def spine_expectation(model, lam, alpha, f, reps, rng=None):
    """Estimate E[f(S_1)] = E[sum_{|u|=1} |L(u)|^alpha f(-log|L(u)|)]; returns (estimate, stderr)."""
    lam = as_lambda(lam)
    labs = _check_tilt(model, lam, alpha)
    reps = check_count("reps", reps, 2)
    rng = check_random_state(rng)
    parent, mult, x = model.sample_atoms(reps, rng)
    s = lam.real * x + labs                     # -log|L|
    vals = mult * np.exp(-alpha * s) * np.asarray(f(s), dtype=float)
    per = np.bincount(parent, vals, minlength=reps)
    return float(per.mean()), float(per.std(ddof=1) / math.sqrt(reps))


@dataclass
class SpinePath:
    """Spine positions S_0 = 0, S_1, ..., S_n and the path's importance weight."""

    steps: np.ndarray
    lam: complex
    alpha: float
    kind: str
    weight: float = 1.0

    def ladder_epochs(self):
        return ladder_epochs(self.steps)


def sample_paths(model, lam, alpha, n, reps, rng=None, kind=None):
    """``reps`` spine paths of length ``n``; returns (positions (reps, n+1), weights, kind).

    ``kind`` defaults to the closed form when the model has one.
    """
    lam = as_lambda(lam)
    labs = _check_tilt(model, lam, alpha)
    n = check_count("n", n, 0)
    reps = check_count("reps", reps, 1)
    rng = check_random_state(rng)
    if kind is None:
        kind = CLOSED_FORM if isinstance(model, GaussianBinary) else WEIGHTED_RESAMPLING
    if kind == CLOSED_FORM and not isinstance(model, GaussianBinary):
        raise ValueError("closed-form spine steps exist only for the Gaussian binary model")
    pos = np.zeros((reps, n + 1))
    weight = np.ones(reps)
    theta = lam.real
    for k in range(1, n + 1):
        if kind == CLOSED_FORM:
            x = rng.normal(-alpha * theta, 1.0, reps)
            step = theta * x + labs
        else:
            step, w = _resample_step(model, theta, labs, alpha, reps, rng)
            weight *= w
        pos[:, k] = pos[:, k - 1] + step
    return pos, weight, kind


def _resample_step(model, theta, labs, alpha, reps, rng):
    parent, mult, x = model.sample_atoms(reps, rng)
    s = theta * x + labs
    w = mult * np.exp(-alpha * s)
    total = np.bincount(parent, w, minlength=reps)
    step = np.zeros(reps)
    if w.size:
        cw = np.cumsum(w)
        counts = np.bincount(parent, minlength=reps)
        ends = np.cumsum(counts)
        starts = ends - counts
        base = np.where(starts > 0, cw[np.maximum(starts - 1, 0)], 0.0)
        has = counts > 0
        target = base[has] + rng.random(has.sum()) * total[has]
        idx = np.searchsorted(cw, target, side="right")
        idx = np.clip(idx, starts[has], ends[has] - 1)
        step[has] = s[idx]
    return step, total


def spine_sample(model, lam, alpha, n, rng=None, kind=None):
    """One spine path of length ``n``."""
    pos, weight, kind = sample_paths(model, lam, alpha, n, 1, rng, kind)
    return SpinePath(pos[0], as_lambda(lam), float(alpha), kind, float(weight[0]))


def spine_mean_step(model, lam, alpha, reps, rng=None, kind=None):
    """Importance-weighted estimate of E[S_1] from sampled paths; (estimate, stderr)."""
    pos, weight, _ = sample_paths(model, lam, alpha, 1, reps, rng, kind)
    v = weight * pos[:, 1]
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def ladder_epochs(steps):
    """Strictly descending epochs tau_k and weakly ascending epochs sigma_k (k >= 1).

    tau_k are the indices where S drops strictly below every earlier value;
    sigma_n = inf{k > sigma_{n-1}: S_k >= S_{sigma_{n-1}}} with sigma_0 = 0,
    which selects exactly the indices where S reaches its running maximum.
    """
    s = np.asarray(steps.steps if isinstance(steps, SpinePath) else steps, dtype=float)
    if s.size < 2:
        return [], []
    prev_min = np.minimum.accumulate(s)[:-1]
    prev_max = np.maximum.accumulate(s)[:-1]
    tail = s[1:]
    desc = np.flatnonzero(tail < prev_min) + 1
    asc = np.flatnonzero(tail >= prev_max) + 1
    return desc.tolist(), asc.tolist()


@dataclass
class DualityReport:
    pre_ladder: float          # E sum_{j < tau_1, j <= N} l(e^{-S_j})
    pre_ladder_se: float
    ascending: float           # E sum_{sigma_n <= N} l(e^{-S_{sigma_n}})
    ascending_se: float
    z_score: float
    horizon: int
    p_unfinished: float        # P(tau_1 > N): paths whose first descent lies past the horizon
    tail_term: float           # mean l(e^{-S_N}) on unfinished paths, size of the next omitted term


def duality_check(model, lam, alpha, tv=None, horizon=1000, reps=2000, rng=None):
    """Compare both sides of the duality lemma along a spine truncated at ``horizon``.

    For a fixed horizon N, j < tau_1 holds iff j is a weak ascending epoch of
    the time-reversed walk, so both truncated sums have the same mean.
    """
    if tv is None:
        a = min(max(float(alpha), 1.01), 1.99)
        tv = TVFunction(a, 1.5, select_u0(a, 1.5))
    pos, weight, _ = sample_paths(model, lam, alpha, horizon, reps, rng)
    g = np.exp(_log_ell(tv, -pos))
    below = pos[:, 1:] < np.minimum.accumulate(pos, axis=1)[:, :-1]
    first_desc = np.where(below.any(axis=1), below.argmax(axis=1) + 1, horizon + 1)
    j = np.arange(horizon + 1)
    pre = (g * (j[None, :] < first_desc[:, None])).sum(axis=1) * weight
    rec = np.ones_like(pos, dtype=bool)
    rec[:, 1:] = pos[:, 1:] >= np.maximum.accumulate(pos, axis=1)[:, :-1]
    asc = (g * rec).sum(axis=1) * weight
    se_a = pre.std(ddof=1) / math.sqrt(reps)
    se_b = asc.std(ddof=1) / math.sqrt(reps)
    z = (pre.mean() - asc.mean()) / math.hypot(se_a, se_b) if se_a + se_b > 0 else 0.0
    unfinished = first_desc > horizon
    tail = float(g[unfinished, -1].mean()) if unfinished.any() else 0.0
    return DualityReport(float(pre.mean()), float(se_a), float(asc.mean()), float(se_b), float(z),
                         horizon, float(unfinished.mean()), tail)


@dataclass
class DRIReport:
    monotone: bool
    riemann_sums: list
    ratio: float
    converging: bool
    tail_exponent: float
    tail_window: tuple


def dri_check(tv, x_max=1e4, grid=10**5):
    """Numerical direct-Riemann-integrability check of x -> l(e^{-x}) on [0, x_max].

    Monotonicity is checked on a uniform grid; upper Riemann sums for meshes
    1, 0.5, 0.25 must converge (ratio of successive differences <= 0.6); the
    tail exponent is fitted on [10 u0, 10^4 u0], where the closed form is a
    pure power x^{-delta}.
    """
    xs = np.linspace(0.0, x_max, grid)
    vals = np.exp(_log_ell(tv, -xs))
    if np.any(np.diff(vals) > 1e-12):
        raise MonotonicityViolation("l(e^{-x}) increases on the grid")
    sums = []
    for h in (1.0, 0.5, 0.25):
        left = np.arange(0.0, x_max, h)
        # nonincreasing integrand: the left endpoint carries the sup
        sums.append(float(h * np.exp(_log_ell(tv, -left)).sum()))
    d0, d1 = abs(sums[1] - sums[0]), abs(sums[2] - sums[1])
    ratio = d1 / d0 if d0 > 0 else 0.0
    window = np.exp(np.linspace(math.log(10 * tv.u0), math.log(1e4 * tv.u0), 200))
    slope = float(np.polyfit(np.log(window), _log_ell(tv, -window), 1)[0])
    return DRIReport(True, sums, ratio, ratio <= 0.6, slope, (10 * tv.u0, 1e4 * tv.u0))
