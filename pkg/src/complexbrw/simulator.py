"""Forward simulation of the branching random walk and its martingales.

Particle weights L(u) = m(lambda)^{-n} exp(-lambda S(u)) are stored as a
log-modulus and a wrapped phase rather than as complex numbers, so that
moduli spanning many decades near the boundary do not cancel.  Sums over a
generation use ``math.fsum`` (exactly rounded) in particle-array order.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np

from . import charfun
from .exceptions import NotNormalized, PopulationCapExceeded, ZeroTransform
from .models import wrap_phase
from ._validation import as_lambda, check_count, check_random_state, stream_for

DEFAULT_CAP = 20_000_000


def _weight_constants(model, lam):
    arr = np.array([lam])
    if not bool(model.theta_in_domain(lam.real)):
        raise ZeroTransform(f"m({lam}) diverges")
    labs = float(model.log_abs_m(arr)[0])
    if not np.isfinite(labs) or labs - float(model.log_m(lam.real)) < math.log(charfun.ZERO_RATIO):
        raise ZeroTransform(f"m({lam}) vanishes")
    return labs, float(model.arg_m(arr)[0])


@dataclass
class Generation:
    """One generation: positions S(u), log|L(u)|, arg L(u) and truncation flags."""

    n: int
    lam: complex
    positions: np.ndarray
    logweights: np.ndarray
    phases: np.ndarray
    alive: np.ndarray        # lineage never exceeded the truncation level
    in_stream: np.ndarray    # parent was alive (member of the truncated sum)
    log_abs_m: float
    arg_m: float
    thinned: bool = False

    @property
    def population(self):
        return self.positions.shape[0]

    def direct_logweights(self):
        """-theta S(u) - n log|m(lambda)|, the non-accumulated form."""
        return -self.lam.real * self.positions - self.n * self.log_abs_m


def root_generation(model, lam, log_t=math.inf):
    lam = as_lambda(lam)
    labs, arg = _weight_constants(model, lam)
    if log_t < 0:
        raise ValueError("truncation level t must be >= 1 so the root survives")
    one = np.ones(1, dtype=bool)
    return Generation(0, lam, np.zeros(1), np.zeros(1), np.zeros(1), one, one.copy(), labs, arg)


def step(gen, model, rng, cap=DEFAULT_CAP, log_t=math.inf, thinning=False):
    """Advance one generation.

    With ``thinning`` a population above ``cap`` is Poisson-thinned (each
    child kept with probability cap/pop and its weight inflated by pop/cap);
    the resulting generation is flagged ``thinned`` and is biased for
    diagnostics.  Otherwise exceeding ``cap`` raises.
    """
    try:
        counts, disp = model.sample_generation(gen.population, rng, cap=None if thinning else cap)
    except PopulationCapExceeded:
        raise
    theta, eta = gen.lam.real, gen.lam.imag
    parent = np.repeat(np.arange(gen.population), counts)
    positions = gen.positions[parent] + disp
    logw = gen.logweights[parent] + (-theta * disp - gen.log_abs_m)
    phases = wrap_phase(gen.phases[parent] + (-eta * disp - gen.arg_m))
    in_stream = gen.alive[parent]
    thinned = gen.thinned
    if thinning and positions.shape[0] > cap:
        q = cap / positions.shape[0]
        keep = rng.random(positions.shape[0]) < q
        positions, phases, in_stream = positions[keep], phases[keep], in_stream[keep]
        logw = logw[keep] - math.log(q)
        thinned = True
    phases = np.atleast_1d(phases)
    alive = in_stream & (logw <= log_t)
    return Generation(gen.n + 1, gen.lam, positions, logw, phases, alive, in_stream,
                      gen.log_abs_m, gen.arg_m, thinned)


def _complex_parts(logw, phases):
    mod = np.exp(logw)
    return mod * np.cos(phases), mod * np.sin(phases)


def martingale(gen, lam=None):
    """Z_n = sum_{|u|=n} L(u), compensated on both components."""
    if lam is not None and as_lambda(lam) != gen.lam:
        raise ValueError("generation was built for a different lambda")
    re, im = _complex_parts(gen.logweights, gen.phases)
    return complex(math.fsum(re), math.fsum(im))


def w_martingale(gen, alpha):
    """W_n = sum_{|u|=n} |L(u)|^alpha."""
    return math.fsum(np.exp(alpha * gen.logweights))


@dataclass
class MartingaleTrace:
    """Per-generation record of one replicate."""

    rep: int
    seed: Optional[int]
    lam: complex
    z: np.ndarray                     # complex, index n = 0..N
    pop: np.ndarray
    w: Optional[np.ndarray] = None
    zt: Optional[np.ndarray] = None
    max_logweight: float = 0.0        # max over all simulated particles of log|L|
    thinned: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def n_gens(self):
        return self.z.shape[0] - 1

    def records(self):
        for n in range(self.z.shape[0]):
            yield {
                "rep": self.rep,
                "n": n,
                "z": [float(self.z[n].real), float(self.z[n].imag)],
                "w": None if self.w is None else float(self.w[n]),
                "zt": None if self.zt is None else [float(self.zt[n].real), float(self.zt[n].imag)],
                "pop": int(self.pop[n]),
            }


def run(model, lam, n_gens, rng=None, alpha=None, t=None, cap=DEFAULT_CAP,
        thinning=False, rep=0, seed=None):
    """Simulate ``n_gens`` generations and record Z_n (and W_n, Z_n^(t) on request).

    The truncated martingale is Z_n^(t) = 1 + sum_{k<=n} D_k^(t), computed as the
    sum over the current truncated stream plus the frozen mass of lineages
    killed at earlier generations; when no lineage exceeds ``t`` it is the
    same floating-point sum as Z_n.
    """
    lam = as_lambda(lam)
    n_gens = check_count("n_gens", n_gens, 0)
    rng = check_random_state(rng)
    log_t = math.inf if t is None else math.log(t)
    gen = root_generation(model, lam, log_t)
    z = np.empty(n_gens + 1, dtype=complex)
    pop = np.empty(n_gens + 1, dtype=np.int64)
    w = None if alpha is None else np.empty(n_gens + 1)
    zt = None if t is None else np.empty(n_gens + 1, dtype=complex)
    killed_re = killed_im = 0.0
    max_lw = 0.0
    for n in range(n_gens + 1):
        if n > 0:
            gen = step(gen, model, rng, cap, log_t, thinning)
        re, im = _complex_parts(gen.logweights, gen.phases)
        z[n] = complex(math.fsum(re), math.fsum(im))
        pop[n] = gen.population
        if gen.population:
            max_lw = max(max_lw, float(gen.logweights.max()))
        if w is not None:
            w[n] = math.fsum(np.exp(alpha * gen.logweights))
        if zt is not None:
            s = gen.in_stream
            if s.all():
                cur = complex(math.fsum(re), math.fsum(im))
            else:
                cur = complex(math.fsum(re[s]), math.fsum(im[s]))
            zt[n] = complex(cur.real + killed_re, cur.imag + killed_im)
            killed = gen.in_stream & ~gen.alive
            if killed.any():
                killed_re = math.fsum([killed_re, *re[killed]])
                killed_im = math.fsum([killed_im, *im[killed]])
    return MartingaleTrace(rep, seed, lam, z, pop, w, zt, max_lw, gen.thinned)


def truncated_run(model, lam, t, n_max, rng=None, alpha=None, cap=DEFAULT_CAP):
    """``run`` with truncation level ``t >= 1`` (both streams from one tree)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return run(model, lam, n_max, rng, alpha=alpha, t=t, cap=cap)


def simulate_ensemble(model, lam, n_gens, reps, seed=0, alpha=None, t=None,
                      cap=DEFAULT_CAP, thinning=False, threads=1):
    """Independent replicates; replicate ``k`` draws from a stream keyed by (seed, k).

    Output order and values do not depend on ``threads``.
    """
    reps = check_count("reps", reps, 1)

    def one(k):
        return run(model, lam, n_gens, stream_for(seed, k), alpha, t, cap, thinning, rep=k, seed=seed)

    if threads <= 1:
        return [one(k) for k in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(reps)))


def traces_to_array(traces):
    """Stack the Z_n of an ensemble into a (reps, N+1) complex array."""
    return np.vstack([tr.z for tr in traces])


def sample_z_batch(model, lam, n_gens, reps, rng=None, alpha=None):
    """Z_n for many small replicates at once (particles tagged by replicate id).

    Intended for shallow trees where per-replicate loops dominate the cost;
    per-replicate sums use ``np.bincount`` (plain summation, adequate for the
    handful of particles involved).  Returns ``z`` of shape (reps, n_gens+1)
    and, if ``alpha`` is given, ``w`` of the same shape.
    """
    lam = as_lambda(lam)
    rng = check_random_state(rng)
    labs, arg = _weight_constants(model, lam)
    rep = np.arange(reps)
    logw = np.zeros(reps)
    ph = np.zeros(reps)
    z = np.empty((reps, n_gens + 1), dtype=complex)
    w = None if alpha is None else np.empty((reps, n_gens + 1))
    z[:, 0] = 1.0
    if w is not None:
        w[:, 0] = 1.0
    for n in range(1, n_gens + 1):
        counts, disp = model.sample_generation(rep.shape[0], rng, cap=DEFAULT_CAP)
        parent = np.repeat(np.arange(rep.shape[0]), counts)
        rep = rep[parent]
        logw = logw[parent] - lam.real * disp - labs
        ph = ph[parent] - lam.imag * disp - arg
        mod = np.exp(logw)
        z[:, n] = (np.bincount(rep, mod * np.cos(ph), minlength=reps)
                   + 1j * np.bincount(rep, mod * np.sin(ph), minlength=reps))
        if w is not None:
            w[:, n] = np.bincount(rep, np.exp(alpha * logw), minlength=reps)
    return (z, w) if w is not None else z


def check_c1(model, lam, alpha, tol=1e-8):
    """Raise ``NotNormalized`` unless f(alpha) = 1 within ``tol``."""
    f = charfun.f_ratio(model, lam, alpha)
    if not isinstance(f, float) or abs(f - 1.0) > tol:
        raise NotNormalized(f"f({alpha}) = {f!r} at lambda={lam}; (C1) does not hold")
    return f


def sup_weight_tail(model, lam, alpha, t, reps, n_max, rng=None, floor_ratio=1e-2,
                    chunk=256, cap=DEFAULT_CAP):
    """Estimate P(sup_u |L(u)| > t) from ``reps`` trees of depth ``n_max``.

    Lineages whose weight falls below ``floor_ratio * t`` are abandoned, so
    the estimate is a lower bound.  The expected number of particles above a
    level eps is at most eps^{-alpha}, which keeps the live population small.
    Returns ``(estimate, stderr)``.
    """
    lam = as_lambda(lam)
    if t <= 1:
        raise ValueError("t must exceed 1")
    check_c1(model, lam, alpha)
    rng = check_random_state(rng)
    labs, _ = _weight_constants(model, lam)
    log_t = math.log(t)
    log_floor = math.log(floor_ratio * t)
    hits = 0
    for start in range(0, reps, chunk):
        m = min(chunk, reps - start)
        rep = np.arange(m)
        logw = np.zeros(m)
        hit = np.zeros(m, dtype=bool)
        for _ in range(n_max):
            if rep.size == 0:
                break
            counts, disp = model.sample_generation(rep.size, rng, cap=cap)
            parent = np.repeat(np.arange(rep.size), counts)
            rep = rep[parent]
            logw = logw[parent] - lam.real * disp - labs
            over = logw > log_t
            if over.any():
                hit[rep[over]] = True
            keep = ~hit[rep] & (logw >= log_floor)
            rep, logw = rep[keep], logw[keep]
        hits += int(hit.sum())
    p = hits / reps
    return p, math.sqrt(max(p * (1 - p), 0.0) / reps)
