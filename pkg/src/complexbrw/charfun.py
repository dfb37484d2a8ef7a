"""The ratio f(p) = m(p*theta) / |m(lambda)|^p and the quantities derived from it.

Everything is evaluated in log space, g(p) = log f(p).  Because log m is
convex on the real axis, g is convex in p; the minimal root alpha of g on
[1, 2] and the minimiser of g are therefore found by bisection on g and g'
(closed-form for every model shipped here) rather than by Newton steps,
which stall at the double roots met on the tangency part of the boundary.
"""
from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np

from .exceptions import ZeroTransform
from .models import DIVERGENT
from ._validation import as_lambda

# |m(lambda)| / m(theta) below this counts as m(lambda) = 0
ZERO_RATIO = 1e-12
DEFAULT_TOL = 1e-10
DEFAULT_GRID = 257
_BISECT_ITERS = 80


def _check_nonzero(model, lam):
    labs = model.log_abs_m(lam)
    lreal = model.log_m(lam.real)
    zero = ~np.isfinite(labs) | (labs - lreal < math.log(ZERO_RATIO))
    return labs, zero


def log_ratio(model, lam, p, log_abs=None):
    """g(p) = log m(p theta) - p log|m(lambda)| (broadcasts over ``lam`` and ``p``)."""
    lam = np.asarray(lam, dtype=complex)
    labs = model.log_abs_m(lam) if log_abs is None else log_abs
    p = np.asarray(p, dtype=float)
    return model.log_m(p * lam.real) - p * labs


def dlog_ratio(model, lam, p, log_abs=None):
    """g'(p) = theta (log m)'(p theta) - log|m(lambda)|."""
    lam = np.asarray(lam, dtype=complex)
    labs = model.log_abs_m(lam) if log_abs is None else log_abs
    p = np.asarray(p, dtype=float)
    return lam.real * model.dlog_m(p * lam.real) - labs


def d2log_ratio(model, lam, p):
    lam = np.asarray(lam, dtype=complex)
    p = np.asarray(p, dtype=float)
    return lam.real**2 * model.d2log_m(p * lam.real)


def f_ratio(model, lam, p):
    """m(p theta) / |m(lambda)|^p, or ``DIVERGENT`` when m(p theta) diverges."""
    lam = as_lambda(lam)
    arr = np.array([lam])
    if not model.theta_in_domain(lam.real):
        return DIVERGENT
    labs, zero = _check_nonzero(model, arr)
    if zero[0]:
        raise ZeroTransform(f"m({lam}) vanishes")
    if not model.theta_in_domain(p * lam.real):
        return DIVERGENT
    return float(np.exp(log_ratio(model, arr, p, labs)[0]))


def log_moment_functional(model, lam, alpha):
    """E[sum_{|u|=1} |L(u)|^alpha log|L(u)|], i.e. f'(alpha).

    At a point where f(alpha) = 1 this equals the derivative of log f at alpha.
    """
    lam = as_lambda(lam)
    arr = np.array([lam])
    labs, zero = _check_nonzero(model, arr)
    if zero[0]:
        raise ZeroTransform(f"m({lam}) vanishes")
    g = log_ratio(model, arr, alpha, labs)[0]
    dg = dlog_ratio(model, arr, alpha, labs)[0]
    return float(np.exp(g) * dg)


def second_log_moment(model, lam, alpha):
    """E[sum |L|^alpha log^2|L|] = f''(alpha) = f (g'' + g'^2)."""
    lam = as_lambda(lam)
    arr = np.array([lam])
    g = log_ratio(model, arr, alpha)[0]
    dg = dlog_ratio(model, arr, alpha)[0]
    d2g = d2log_ratio(model, arr, alpha)[0]
    return float(np.exp(g) * (d2g + dg * dg))


def _bisect(fun, a, b, iters=_BISECT_ITERS):
    """Vectorised bisection for a sign change fun(a) > 0 >= fun(b)."""
    a = np.array(a, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        pos = fun(mid) > 0
        a = np.where(pos, mid, a)
        b = np.where(pos, b, mid)
        if np.all(b - a <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(a))):
            break
    return 0.5 * (a + b)


@dataclass
class RatioAnalysis:
    """Vectorised summary of g on [1, 2] for an array of parameters."""

    lam: np.ndarray
    in_domain: np.ndarray
    zero: np.ndarray
    g1: np.ndarray          # g(1) >= 0
    p_min: np.ndarray       # argmin of g on [1, 2]
    g_min: np.ndarray       # min of g on [1, 2]
    alpha: np.ndarray       # minimal root of g in [1, 2] (nan if none within tol)
    derivative: np.ndarray  # f'(alpha)


def analyze(model, lam, tol=DEFAULT_TOL):
    """Minimiser, minimum and minimal root of log f over [1, 2], vectorised."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    n = lam.shape[0]
    in_domain = np.asarray(model.theta_in_domain(lam.real), dtype=bool)
    nan = np.full(n, np.nan)
    res = RatioAnalysis(lam, in_domain, np.zeros(n, bool), nan.copy(), nan.copy(),
                        nan.copy(), nan.copy(), nan.copy())
    # f is finite on [1, 2] iff both theta and 2 theta lie in the (convex) domain
    ok = in_domain & np.asarray(model.theta_in_domain(2 * lam.real), dtype=bool)
    if not np.any(ok):
        return res
    lam_ok = lam[ok]
    with np.errstate(all="ignore"):
        labs, zero = _check_nonzero(model, lam_ok)
    res.zero[ok] = zero
    good = ~zero
    idx = np.flatnonzero(ok)[good]
    lam_g = lam_ok[good]
    labs = labs[good]
    if lam_g.size == 0:
        return res

    def g(p):
        return log_ratio(model, lam_g, p, labs)

    def dg(p):
        return dlog_ratio(model, lam_g, p, labs)

    ones = np.ones(lam_g.size)
    g1 = g(ones)
    d1 = dg(ones)
    d2 = dg(2 * ones)
    p_min = np.where(d1 >= 0, 1.0, np.where(d2 <= 0, 2.0, np.nan))
    inner = np.isnan(p_min)
    if np.any(inner):
        sub = lam_g[inner]
        sub_labs = labs[inner]
        # g' is nondecreasing: find its zero
        p_min[inner] = _bisect(lambda p: -dlog_ratio(model, sub, p, sub_labs),
                               np.ones(sub.size), 2 * np.ones(sub.size))
    g_min = g(p_min)

    alpha = np.full(lam_g.size, np.nan)
    at_one = g1 <= tol
    alpha[at_one] = 1.0
    tangent = ~at_one & (np.abs(g_min) <= tol)
    alpha[tangent] = p_min[tangent]
    crossing = ~at_one & (g_min < -tol)
    if np.any(crossing):
        sub = lam_g[crossing]
        sub_labs = labs[crossing]
        alpha[crossing] = _bisect(lambda p: log_ratio(model, sub, p, sub_labs),
                                  np.ones(sub.size), p_min[crossing])
    have = ~np.isnan(alpha)
    deriv = np.full(lam_g.size, np.nan)
    if np.any(have):
        sub = lam_g[have]
        a = alpha[have]
        deriv[have] = np.exp(log_ratio(model, sub, a, labs[have])) * dlog_ratio(model, sub, a, labs[have])

    res.g1[idx] = g1
    res.p_min[idx] = p_min
    res.g_min[idx] = g_min
    res.alpha[idx] = alpha
    res.derivative[idx] = deriv
    return res


@dataclass
class RatioCurve:
    """Samples of f on a uniform grid over [1, 2] plus the minimal root, if any."""

    lam: complex
    p: np.ndarray
    f: np.ndarray
    alpha_root: Optional[tuple] = None
    p_min: float = float("nan")
    f_min: float = float("nan")
    extra: dict = field(default_factory=dict)


def alpha_root(model, lam, tol=DEFAULT_TOL):
    """Minimal alpha in [1, 2] with f(alpha) = 1, as ``(alpha, f'(alpha))``.

    Returns ``None`` when f stays above ``1 + tol`` on [1, 2].  A tangency
    (minimum of f equal to 1 within ``tol``) returns the minimiser.
    """
    lam = as_lambda(lam)
    res = analyze(model, np.array([lam]), tol)
    if res.zero[0]:
        raise ZeroTransform(f"m({lam}) vanishes")
    if np.isnan(res.alpha[0]):
        return None
    return float(res.alpha[0]), float(res.derivative[0])


def ratio_curve(model, lam, grid=DEFAULT_GRID, tol=DEFAULT_TOL):
    lam = as_lambda(lam)
    res = analyze(model, np.array([lam]), tol)
    if res.zero[0]:
        raise ZeroTransform(f"m({lam}) vanishes")
    p = np.linspace(1.0, 2.0, grid)
    with np.errstate(all="ignore"):
        f = np.exp(log_ratio(model, np.array([lam]), p))
    root = None if np.isnan(res.alpha[0]) else (float(res.alpha[0]), float(res.derivative[0]))
    return RatioCurve(lam, p, f, root, float(res.p_min[0]), float(np.exp(res.g_min[0])))


def c3_check(model, lam, alpha, resolution=16):
    """Is E[sum |L|^vartheta] = f(vartheta) finite for some vartheta in [0, alpha)?

    Scans vartheta = k/resolution, k = resolution, ..., 0 (restricted to
    vartheta < alpha) from the top; finiteness of f on [1, alpha] follows
    from convexity of the domain, so the scan never needs to exceed 1.
    Returns ``(holds, witness)`` with the largest finite grid point.
    """
    lam = as_lambda(lam)
    grid = np.arange(resolution, -1, -1) / resolution
    grid = grid[grid < alpha]
    for v in grid:
        if bool(model.theta_in_domain(v * lam.real)) and bool(model.theta_in_domain(lam.real)):
            return True, float(v)
    return False, float("nan")
