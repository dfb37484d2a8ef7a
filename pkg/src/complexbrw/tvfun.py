"""The slowly varying function l and the even convex phi(x) = |x|^alpha l(|x|).

l(x) = exp(int_0^{log x} eps(u) du) with eps(u) = delta/u0 on |u| <= u0 and
delta/|u| beyond.  The integral is elementary, so l is evaluated in closed
form and the log-branch identity l(x) = c log^delta(x), c = e^delta u0^-delta,
holds to rounding rather than asymptotically.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import DomainError, SearchExhausted

U0_MAX = 2**20
GRID_POINTS = 1000


def _log_ell(tv, logx):
    """log l(x) as a function of log x (odd in log x)."""
    u = np.abs(logx)
    with np.errstate(divide="ignore"):
        inner = tv.delta * u / tv.u0
        outer = tv.delta * (1.0 + np.log(np.maximum(u, tv.u0) / tv.u0))
    return np.sign(logx) * np.where(u <= tv.u0, inner, outer)


def _eps(tv, logx):
    u = np.abs(logx)
    return np.where(u <= tv.u0, tv.delta / tv.u0, tv.delta / np.maximum(u, 1e-300))


@dataclass(frozen=True)
class TVFunction:
    alpha: float
    delta: float
    u0: float

    def __post_init__(self):
        if not 1 < self.alpha < 2:
            raise DomainError("alpha must lie in (1, 2)")
        if not self.delta > 0 or not self.u0 > 0:
            raise DomainError("delta and u0 must be positive")

    @property
    def c(self):
        """Constant in l(x) = c log^delta(x) for x > e^{u0}."""
        return math.exp(self.delta) * self.u0 ** (-self.delta)

    def ell(self, x):
        return ell(self, x)

    def phi(self, z):
        return phi(self, z)


def ell(tv, x):
    """l(x) for x > 0 (scalar or array)."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("l is defined for x > 0 only")
    out = np.exp(_log_ell(tv, np.log(xa)))
    return float(out) if out.ndim == 0 else out


def _phi_real(tv, x):
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(ax)
    pos = ax > 0
    lx = np.log(ax[pos])
    out[pos] = np.exp(tv.alpha * lx + _log_ell(tv, lx))
    return out


def phi(tv, z):
    """phi(x) = |x|^alpha l(|x|), phi(0) = 0, and phi(x + iy) = phi(x) + phi(y)."""
    za = np.asarray(z)
    if np.iscomplexobj(za):
        out = _phi_real(tv, za.real) + _phi_real(tv, za.imag)
    else:
        out = _phi_real(tv, za)
    return float(out) if out.ndim == 0 else out


def dphi(tv, x):
    """phi'(x) = x^{alpha-1} l(x) (alpha + eps(log x)) for x > 0."""
    lx = np.log(np.asarray(x, dtype=float))
    return np.exp((tv.alpha - 1) * lx + _log_ell(tv, lx)) * (tv.alpha + _eps(tv, lx))


@dataclass
class PropertyReport:
    passed: bool
    checks: dict = field(default_factory=dict)

    def lines(self):
        return [f"{'PASS' if ok else 'FAIL'} {name}" for name, ok in self.checks.items()]


def _kink_mask(tv, x):
    """Exclude the two grid cells on either side of each kink x = e^{+-u0}."""
    mask = np.ones(x.size, dtype=bool)
    for k in (tv.u0, -tv.u0):
        i = np.searchsorted(x, math.exp(k)) if -700 < k < 700 else None
        if i is not None and 0 < i < x.size:
            mask[max(i - 2, 0):i + 2] = False
    return mask


def check_invariants(tv, n=GRID_POINTS, tol=1e-9):
    """Convexity of phi and concavity of phi' on a log grid over (0, e^{3 u0}].

    Second differences are taken with respect to x on the nonuniform grid
    (divided differences), so the checks are scale-aware; the tolerance is
    relative to the local magnitude of the quantity differenced.
    """
    top = 3 * tv.u0
    lo = min(-3 * tv.u0, -20.0)
    logx = np.linspace(lo, top, n)
    x = np.exp(logx)
    y = _phi_real(tv, x)
    dy = dphi(tv, x)
    conv = _second_divided(x, y)
    dconv = _second_divided(x, dy)
    keep = _kink_mask(tv, x)[1:-1]
    scale_y = np.abs(y[1:-1]) / np.maximum(x[1:-1] ** 2, 1e-300)
    scale_d = np.abs(dy[1:-1]) / np.maximum(x[1:-1] ** 2, 1e-300)
    convex = bool(np.all(conv[keep] >= -tol * scale_y[keep]))
    concave_d = bool(np.all(dconv[keep] <= tol * scale_d[keep]))
    return convex, concave_d


def _second_divided(x, y):
    h0 = x[1:-1] - x[:-2]
    h1 = x[2:] - x[1:-1]
    return 2 * ((y[2:] - y[1:-1]) / h1 - (y[1:-1] - y[:-2]) / h0) / (h0 + h1)


def select_u0(alpha, delta, u0_max=U0_MAX):
    """Smallest u0 in {1, 2, 4, ...} whose TVFunction passes the grid invariants."""
    u0 = 1.0
    while u0 <= u0_max:
        tv = TVFunction(alpha, delta, u0)
        if all(check_invariants(tv)):
            return u0
        u0 *= 2
    raise SearchExhausted(f"no u0 <= {u0_max} passes for alpha={alpha}, delta={delta}")


def property_report(tv, n=10**4, rng=None):
    """Randomized checks of l(x)l(1/x) = 1, the log branch, l(xy) <= l(x)^2 l(y),
    monotonicity, and l(|zw|) <= l(|z|) l(|w|)^2 for |w| >= 1."""
    rng = np.random.default_rng(rng)
    checks = {}
    x = np.exp(rng.uniform(math.log(1e-8), math.log(1e8), n))
    checks["reciprocal"] = bool(np.all(np.abs(ell(tv, x) * ell(tv, 1 / x) - 1) <= 1e-12))
    lx = tv.u0 * np.exp(rng.uniform(0, 3, n)) * (1 + 1e-9)
    big = np.exp(np.minimum(lx, 700.0))
    exact = tv.c * np.minimum(lx, 700.0) ** tv.delta
    checks["log_branch"] = bool(np.all(np.abs(ell(tv, big) / exact - 1) <= 1e-12))
    xs = np.exp(rng.uniform(0, math.log(1e8), n))
    ys = np.exp(rng.uniform(math.log(1e-8), math.log(1e8), n))
    checks["submultiplicative"] = bool(np.all(ell(tv, xs * ys) <= ell(tv, xs) ** 2 * ell(tv, ys) * (1 + 1e-12)))
    grid = np.exp(np.linspace(math.log(1e-8), math.log(1e8), n))
    checks["nondecreasing"] = bool(np.all(np.diff(ell(tv, grid)) >= 0))
    mz = np.exp(rng.uniform(math.log(1e-4), math.log(1e4), n))
    mw = np.exp(rng.uniform(0, math.log(1e4), n))
    z = mz * np.exp(1j * rng.uniform(-math.pi, math.pi, n))
    w = mw * np.exp(1j * rng.uniform(-math.pi, math.pi, n))
    checks["product_bound"] = bool(np.all(
        ell(tv, np.abs(z * w)) <= ell(tv, np.abs(z)) * ell(tv, np.abs(w)) ** 2 * (1 + 1e-12)))
    convex, concave_d = check_invariants(tv)
    checks["phi_convex"] = convex
    checks["dphi_concave"] = concave_d
    return PropertyReport(all(checks.values()), checks)
