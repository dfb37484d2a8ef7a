"""Convergence/divergence statistics over ensembles of martingale traces.

Almost-sure convergence cannot be observed directly.  ``convergence_verdict``
uses a desk-scale surrogate: Cauchy-type decay of the increments
|Z_n - Z_{n-k}| (Mann-Kendall trend on their medians) together with a
bounded p-th moment curve E|Z_n - 1|^p (log-log growth slope near zero).
Divergence is flagged when that slope is bounded away from zero.
"""
from dataclasses import dataclass, field, asdict
import math
from typing import Optional

import numpy as np
from scipy import stats

from .exceptions import InsufficientData
from .simulator import MartingaleTrace, sample_z_batch
from ._validation import as_lambda, check_count, check_random_state

CONVERGED_SLOPE_MAX = 0.05
DIVERGED_SLOPE_MIN = 0.1
TREND_LEVEL = 0.05


def as_trace_array(traces):
    """(reps, N+1) complex array from traces, an array, or NDJSON-style records."""
    if isinstance(traces, np.ndarray):
        return np.asarray(traces, dtype=complex)
    traces = list(traces)
    if traces and isinstance(traces[0], MartingaleTrace):
        return np.vstack([t.z for t in traces])
    if traces and isinstance(traces[0], dict):
        by_rep = {}
        for rec in traces:
            by_rep.setdefault(rec["rep"], {})[rec["n"]] = complex(*rec["z"])
        reps = sorted(by_rep)
        n_max = min(max(d) for d in by_rep.values())
        return np.array([[by_rep[r][n] for n in range(n_max + 1)] for r in reps])
    return np.asarray(traces, dtype=complex)


def mann_kendall(series):
    """Mann-Kendall trend test; returns (S, p_less, p_greater).

    ``p_less`` is the one-sided p-value for a decreasing trend.  A constant
    series gives S = 0 and p-values of 1.
    """
    y = np.asarray(series, dtype=float)
    n = y.size
    if n < 3 or np.all(y == y[0]):
        return 0.0, 1.0, 1.0
    x = np.arange(n)
    tau_less = stats.kendalltau(x, y, alternative="less")
    tau_greater = stats.kendalltau(x, y, alternative="greater")
    diffs = np.sign(y[None, :] - y[:, None])
    s = float(np.triu(diffs, 1).sum())
    return s, float(tau_less.pvalue), float(tau_greater.pvalue)


def _loglog_slope(n, moments):
    """OLS slope of log(moments) on log(n), along the last axis."""
    moments = np.asarray(moments, dtype=float)
    if np.all(moments == 0):
        return np.zeros(moments.shape[:-1])
    with np.errstate(divide="ignore"):
        y = np.log(moments)
    x = np.log(n) - np.log(n).mean()
    yc = y - y.mean(axis=-1, keepdims=True)
    return (yc * x).sum(axis=-1) / (x * x).sum()


@dataclass
class ConvergenceReport:
    verdict: str                     # Converged | Diverged | Indeterminate
    p: float
    k: int
    reps: int
    n_gens: int
    increment_medians: list
    moment_curve: list
    slope: float
    slope_ci: tuple
    slope_window: tuple
    trend_s: float
    trend_p_decreasing: float
    moment_trend_p_increasing: float
    ui_tail_mass: float
    ui_threshold: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["slope_ci"] = list(self.slope_ci)
        d["slope_window"] = list(self.slope_window)
        return d


def convergence_verdict(traces, p, k=1, n_boot=1000, level=0.95, ui_threshold=10.0, seed=0):
    """Classify an ensemble of traces as Converged, Diverged or Indeterminate.

    The moment-curve slope is the least-squares slope of log E|Z_n - 1|^p
    against log n over the final half of the generations; its confidence
    interval is a percentile bootstrap over replicates.
    """
    z = as_trace_array(traces)
    reps, cols = z.shape
    n_gens = cols - 1
    if reps < 100 or n_gens < 12:
        raise InsufficientData(f"need >= 100 replicates and >= 12 generations; got {reps}, {n_gens}")
    if not p > 1:
        raise ValueError("p must exceed 1")
    k = check_count("k", k, 1)
    notes = []

    inc = np.abs(z[:, k:] - z[:, :-k])
    inc_med = np.median(inc, axis=0)
    if np.all(inc == 0):
        s, p_dec = 0.0, 0.0
        notes.append("increments identically zero: trend requirement met vacuously")
    else:
        s, p_dec, _ = mann_kendall(inc_med)
    trend_ok = p_dec < TREND_LEVEL

    dev = np.abs(z[:, 1:] - 1.0) ** p          # n = 1..N
    moments = dev.mean(axis=0)
    n_all = np.arange(1, n_gens + 1)
    lo = (n_gens + 1) // 2
    window = n_all[lo - 1:] if lo >= 1 else n_all
    sel = window - 1
    slope = float(_loglog_slope(window, moments[sel]))
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(reps, np.full(reps, 1.0 / reps), size=n_boot)
    boot_moments = counts @ dev[:, sel] / reps
    if np.all(moments[sel] == 0):
        boot = np.zeros(n_boot)
    else:
        boot = _loglog_slope(window, np.maximum(boot_moments, np.finfo(float).tiny))
    a = (1 - level) / 2
    ci = (float(np.quantile(boot, a)), float(np.quantile(boot, 1 - a)))
    _, _, p_inc = mann_kendall(moments)

    zp = np.abs(z[:, -1]) ** p
    total = zp.sum()
    ui = float(zp[zp > ui_threshold].sum() / total) if total > 0 else 0.0

    if trend_ok and ci[1] <= CONVERGED_SLOPE_MAX:
        verdict = "Converged"
    elif ci[0] >= DIVERGED_SLOPE_MIN:
        verdict = "Diverged"
    else:
        verdict = "Indeterminate"
    notes.append("Converged = increment decay + bounded p-th moments (surrogate for a.s. convergence)")
    return ConvergenceReport(verdict, float(p), k, reps, n_gens, inc_med.tolist(), moments.tolist(),
                             slope, ci, (int(window[0]), int(window[-1])), s, p_dec, p_inc, ui,
                             float(ui_threshold), notes)


@dataclass
class TailSurvey:
    t_grid: np.ndarray
    survival: np.ndarray      # (N+1, len(t_grid)) estimates of P(|Z_n| > t)
    final_slope: Optional[float]
    heavy: bool               # fitted slope above -1 at the final generation


def tail_survey(traces, t_grid):
    """Empirical P(|Z_n| > t) per generation and threshold, plus a tail-slope fit.

    The slope is a least-squares fit of log survival against log t at the
    final generation over thresholds with nonzero survival; slopes above -1
    are flagged as heavy, not treated as failures.
    """
    z = as_trace_array(traces)
    t_grid = np.asarray(t_grid, dtype=float)
    absz = np.abs(z)
    surv = (absz[:, :, None] > t_grid[None, None, :]).mean(axis=0)
    last = surv[-1]
    ok = last > 0
    slope = None
    if ok.sum() >= 2:
        slope = float(np.polyfit(np.log(t_grid[ok]), np.log(last[ok]), 1)[0])
    return TailSurvey(t_grid, surv, slope, slope is not None and slope > -1)


# ---------------------------------------------------------------------------
# distributional fixed-point check


def energy_statistic(a, b):
    """Two-sample energy statistic for 2-d samples (rows are points)."""
    pooled = np.vstack([a, b])
    d = _pairwise(pooled)
    return _energy_from_matrix(d, a.shape[0])


def _pairwise(x):
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2 * x @ x.T
    return np.sqrt(np.maximum(d2, 0.0))


def _energy_from_matrix(d, n_a, label=None):
    n = d.shape[0]
    if label is None:
        label = np.arange(n) < n_a
    s = label.astype(float)
    t = 1.0 - s
    n_b = n - n_a
    ds = d @ s
    dt = d @ t
    e_ab = (t @ ds) / (n_a * n_b)
    e_aa = (s @ ds) / (n_a * n_a)
    e_bb = (t @ dt) / (n_b * n_b)
    return n_a * n_b / n * (2 * e_ab - e_aa - e_bb)


def energy_test(a, b, n_perm=499, rng=None):
    """Permutation energy-distance test of equal laws; returns (statistic, p_value)."""
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    rng = check_random_state(rng)
    pooled = np.vstack([a, b])
    d = _pairwise(pooled)
    n_a = a.shape[0]
    obs = _energy_from_matrix(d, n_a)
    if obs <= 0 and np.all(d == 0):
        return 0.0, 1.0
    base = np.arange(d.shape[0]) < n_a
    exceed = 0
    for _ in range(n_perm):
        lab = rng.permutation(base)
        if _energy_from_matrix(d, n_a, lab) >= obs:
            exceed += 1
    return float(obs), (exceed + 1) / (n_perm + 1)


def _as_points(z):
    return np.column_stack([z.real, z.imag])


def sample_decomposed(model, lam, n, reps, rng):
    """``reps`` values of sum_{|u|=1} L(u) [Z_{n-1}]_u from fresh independent subtrees."""
    lam = as_lambda(lam)
    counts, disp = model.sample_generation(reps, rng)
    m = model.laplace(lam)
    weights = np.exp(-lam * disp) / m
    sub = sample_z_batch(model, lam, n - 1, disp.shape[0], rng)[:, -1] if disp.size else np.zeros(0)
    parent = np.repeat(np.arange(reps), counts)
    vals = weights * sub
    return np.bincount(parent, vals.real, minlength=reps) + 1j * np.bincount(parent, vals.imag, minlength=reps)


@dataclass
class SelfConsistency:
    statistic: float
    p_value: float
    reps: int
    n: int


def fixed_point_selfconsistency(model, lam, n, reps, rng=None, lam_b=None, n_perm=499):
    """Compare the law of Z_n with that of sum_{|u|=1} L(u) [Z_{n-1}]_u.

    ``lam_b`` builds sample B at a different parameter (negative control).
    """
    lam = as_lambda(lam)
    if reps < 2 or n < 1:
        raise InsufficientData("need reps >= 2 and n >= 1")
    rng = check_random_state(rng)
    a = sample_z_batch(model, lam, n, reps, rng)[:, -1]
    b = sample_decomposed(model, lam if lam_b is None else as_lambda(lam_b), n, reps, rng)
    stat, pval = energy_test(_as_points(a), _as_points(b), n_perm, rng)
    return SelfConsistency(stat, pval, reps, n)
