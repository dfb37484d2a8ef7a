"""Reproduction laws for the branching random walk.

Each model is a sampler for the offspring point process together with the
Laplace transform of its intensity measure,

    m(lambda) = E[ sum_j exp(-lambda * X_j) ],

available in closed form for the built-ins and as an exact finite sum for
table models.  All models are immutable once built.
"""
from abc import ABC, abstractmethod
import math

import numpy as np
from scipy.special import logsumexp

from .exceptions import DomainError, InvalidModel, PopulationCapExceeded
from ._validation import as_lambda, check_count, check_random_state


class Divergent:
    """Marker for a Laplace transform that does not converge."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Divergent"

    def __bool__(self):
        return False


DIVERGENT = Divergent()

LATTICE_N_CAP = 10**6


def wrap_phase(phase):
    """Map angles into (-pi, pi]."""
    out = np.remainder(np.asarray(phase, dtype=float) + np.pi, 2 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return out if np.ndim(out) else float(out)


class OffspringModel(ABC):
    """A reproduction point process with an (analytic) Laplace transform.

    Subclasses implement the vectorised real-axis pieces ``log_m``,
    ``dlog_m`` and ``d2log_m`` together with ``log_abs_m`` / ``arg_m`` for
    complex arguments, and a generation sampler.
    """

    kind = "abstract"
    has_closed_laplace = True
    # theta-domain of m as (lo, hi, lo_open); eta never matters.
    theta_domain = (-math.inf, math.inf, True)

    def theta_in_domain(self, theta):
        lo, hi, lo_open = self.theta_domain
        theta = np.asarray(theta, dtype=float)
        ok = (theta > lo) if lo_open else (theta >= lo)
        return ok & (theta <= hi)

    # ---- real-axis transform -------------------------------------------------
    @abstractmethod
    def log_m(self, theta):
        """log m(theta) for real theta; +inf where m diverges."""

    @abstractmethod
    def dlog_m(self, theta):
        """First derivative of log m at real theta."""

    @abstractmethod
    def d2log_m(self, theta):
        """Second derivative of log m at real theta."""

    # ---- complex transform -----------------------------------------------------
    @abstractmethod
    def log_abs_m(self, lam):
        """log |m(lambda)|, vectorised over complex arrays."""

    @abstractmethod
    def arg_m(self, lam):
        """arg m(lambda) in (-pi, pi], vectorised."""

    def laplace(self, lam):
        lam = as_lambda(lam)
        if not bool(self.theta_in_domain(lam.real)):
            return DIVERGENT
        r = float(np.exp(self.log_abs_m(np.array([lam]))[0]))
        a = float(self.arg_m(np.array([lam]))[0])
        return complex(r * math.cos(a), r * math.sin(a))

    # ---- sampling -----------------------------------------------------------
    @abstractmethod
    def sample_generation(self, n_parents, rng, cap=None):
        """Draw one offspring process for each of ``n_parents`` individuals.

        Returns ``(counts, displacements)``: children of parent ``i`` are the
        slice ``displacements[offsets[i]:offsets[i] + counts[i]]`` with
        offsets the exclusive cumulative sum of counts.  Raises
        ``PopulationCapExceeded`` before allocating if the total exceeds ``cap``.
        """

    def sample(self, rng=None):
        rng = check_random_state(rng)
        _, disp = self.sample_generation(1, rng)
        return disp

    @abstractmethod
    def sample_sums(self, lam, reps, rng):
        """``reps`` i.i.d. copies of sum_j exp(-lambda X_j)."""

    @property
    @abstractmethod
    def mean_offspring(self):
        """E[N] (may be ``inf``)."""

    def moment_blowup(self, theta):
        """True where E[Z_1(theta)^gamma] is infinite for every gamma > 1.

        Only an analytic statement can certify this; the built-ins never blow up.
        """
        return np.zeros(np.shape(theta), dtype=bool)

    def sample_atoms(self, n_parents, rng):
        """Offspring of ``n_parents`` individuals as grouped atoms.

        Returns ``(parent, multiplicity, x)``: ``multiplicity`` children of
        ``parent`` sit at displacement ``x``.  Lets first-generation
        functionals run without materialising huge sibling groups.
        """
        counts, disp = self.sample_generation(n_parents, rng)
        parent = np.repeat(np.arange(int(n_parents)), counts)
        return parent, np.ones(disp.shape[0]), disp

    def __repr__(self):
        return f"{type(self).__name__}()"


class GaussianBinary(OffspringModel):
    """Binary splitting with i.i.d. standard normal displacements; m = 2 exp(lambda^2/2)."""

    kind = "gaussian-binary"
    theta_domain = (-math.inf, math.inf, True)

    def log_m(self, theta):
        theta = np.asarray(theta, dtype=float)
        return math.log(2.0) + 0.5 * theta**2

    def dlog_m(self, theta):
        return np.asarray(theta, dtype=float) * 1.0

    def d2log_m(self, theta):
        return np.ones_like(np.asarray(theta, dtype=float))

    def log_abs_m(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return math.log(2.0) + 0.5 * (lam.real**2 - lam.imag**2)

    def arg_m(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return wrap_phase(lam.real * lam.imag)

    def laplace(self, lam):
        lam = as_lambda(lam)
        return complex(2.0 * np.exp(lam * lam / 2.0))

    def sample_generation(self, n_parents, rng, cap=None):
        total = 2 * int(n_parents)
        if cap is not None and total > cap:
            raise PopulationCapExceeded(total, cap)
        counts = np.full(int(n_parents), 2, dtype=np.int64)
        return counts, rng.standard_normal(total)

    def sample_sums(self, lam, reps, rng):
        lam = as_lambda(lam)
        x = rng.standard_normal((reps, 2))
        return np.exp(-lam * x).sum(axis=1)

    @property
    def mean_offspring(self):
        return 2.0


class LatticePathological(OffspringModel):
    """N = n(n+1) children, all at displacement n, with P(n) = 1/(n(n+1)).

    m(theta) = e^{-theta} / (1 - e^{-theta}) for theta > 0 and m diverges
    at theta <= 0.  The transform is 2*pi*i periodic.
    """

    kind = "lattice"
    theta_domain = (0.0, math.inf, True)

    def __init__(self, n_cap=LATTICE_N_CAP):
        self.n_cap = int(n_cap)

    def log_m(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -theta - np.log(-np.expm1(-theta))
        return np.where(theta > 0, out, np.inf)

    def dlog_m(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -1.0 / (-np.expm1(-theta))

    def d2log_m(self, theta):
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            q = -np.expm1(-theta)
            return np.exp(-theta) / q**2

    def log_abs_m(self, lam):
        lam = np.asarray(lam, dtype=complex)
        with np.errstate(divide="ignore"):
            return -lam.real - np.log(np.abs(-np.expm1(-lam)))

    def arg_m(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return wrap_phase(-lam.imag - np.angle(-np.expm1(-lam)))

    def laplace(self, lam):
        lam = as_lambda(lam)
        if lam.real <= 0:
            return DIVERGENT
        return complex(np.exp(-lam) / (-np.expm1(-lam)))

    def draw_n(self, size, rng):
        """Inverse-CDF draw from P(n) = 1/(n(n+1)); CDF is 1 - 1/(n+1)."""
        u = rng.random(size)
        n = np.ceil(1.0 / (1.0 - u) - 1.0)
        return np.clip(n, 1, self.n_cap).astype(np.int64)

    @staticmethod
    def children_for(n):
        """Displacements of the offspring process given the drawn ``n``."""
        return np.full(int(n) * (int(n) + 1), float(n))

    def sample_generation(self, n_parents, rng, cap=None):
        n = self.draw_n(int(n_parents), rng)
        counts = n * (n + 1)
        total = int(counts.sum())
        if cap is not None and total > cap:
            raise PopulationCapExceeded(total, cap)
        return counts, np.repeat(n.astype(float), counts)

    def sample_atoms(self, n_parents, rng):
        n = self.draw_n(int(n_parents), rng)
        return np.arange(int(n_parents)), (n * (n + 1)).astype(float), n.astype(float)

    def sample_sums(self, lam, reps, rng):
        lam = as_lambda(lam)
        if lam.real <= 0:
            raise DomainError(f"theta={lam.real} outside (0, inf)")
        n = self.draw_n(reps, rng).astype(float)
        return n * (n + 1) * np.exp(-lam * n)

    @property
    def mean_offspring(self):
        return math.inf


class TableModel(OffspringModel):
    """Finite mixture of deterministic offspring configurations.

    ``rows`` is a sequence of ``(probability, [x1, x2, ...])``; with the
    probability given, the parent has exactly those children.  An empty
    list means no children.  ``supercritical=False`` admits degenerate
    fixtures such as deterministic unary branching (E[N] = 1).
    """

    kind = "table"
    theta_domain = (-math.inf, math.inf, True)

    def __init__(self, rows, supercritical=True):
        rows = [(float(p), tuple(float(x) for x in xs)) for p, xs in rows]
        if not rows:
            raise InvalidModel("table needs at least one row")
        probs = np.array([p for p, _ in rows])
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise InvalidModel("table probabilities must be nonnegative and finite")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidModel(f"table probabilities sum to {probs.sum()!r}, not 1")
        if not all(np.all(np.isfinite(xs)) for _, xs in rows):
            raise InvalidModel("displacements must be finite")
        self.rows = tuple(rows)
        self.probs = probs
        self.sizes = np.array([len(xs) for _, xs in rows], dtype=np.int64)
        self._flat = np.array([x for _, xs in rows for x in xs], dtype=float)
        self._starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)
        # intensity measure: one atom per (row, child) with mass = row probability
        self.atoms = self._flat
        self.atom_weights = np.repeat(probs, self.sizes)
        if supercritical and self.mean_offspring <= 1.0:
            raise InvalidModel(f"not supercritical: E[N] = {self.mean_offspring} <= 1")
        keep = self.atom_weights > 0
        self._x = self.atoms[keep]
        self._logw = np.log(self.atom_weights[keep])

    @property
    def mean_offspring(self):
        return float(np.dot(self.probs, self.sizes))

    def _tilted(self, theta):
        theta = np.asarray(theta, dtype=float)
        expo = self._logw - np.multiply.outer(theta, self._x)
        log_m = logsumexp(expo, axis=-1)
        q = np.exp(expo - log_m[..., None])
        return log_m, q

    def log_m(self, theta):
        return self._tilted(theta)[0]

    def dlog_m(self, theta):
        _, q = self._tilted(theta)
        return -(q * self._x).sum(axis=-1)

    def d2log_m(self, theta):
        _, q = self._tilted(theta)
        mean = (q * self._x).sum(axis=-1)
        return (q * self._x**2).sum(axis=-1) - mean**2

    def _m_scaled(self, lam):
        # m(lambda) = exp(c) * sum_a w_a exp(-lambda x_a - c), c = max_a(log w_a - theta x_a)
        lam = np.asarray(lam, dtype=complex)
        re = self._logw - np.multiply.outer(lam.real, self._x)
        c = re.max(axis=-1)
        s = (np.exp(re - c[..., None]) * np.exp(-1j * np.multiply.outer(lam.imag, self._x))).sum(axis=-1)
        return c, s

    def log_abs_m(self, lam):
        c, s = self._m_scaled(lam)
        with np.errstate(divide="ignore"):
            return c + np.log(np.abs(s))

    def arg_m(self, lam):
        _, s = self._m_scaled(lam)
        return wrap_phase(np.angle(s))

    def laplace(self, lam):
        lam = as_lambda(lam)
        return complex(np.sum(self.atom_weights * np.exp(-lam * self.atoms)))

    def row_sums(self, lam):
        """sum_j exp(-lambda x_j) for each row."""
        lam = as_lambda(lam)
        return np.array([np.exp(-lam * np.array(xs)).sum() if xs else 0j for _, xs in self.rows])

    def sample_generation(self, n_parents, rng, cap=None):
        n_parents = int(n_parents)
        which = rng.choice(len(self.rows), size=n_parents, p=self.probs)
        counts = self.sizes[which]
        total = int(counts.sum())
        if cap is not None and total > cap:
            raise PopulationCapExceeded(total, cap)
        offsets = np.cumsum(counts) - counts
        local = np.arange(total) - np.repeat(offsets, counts)
        idx = np.repeat(self._starts[which], counts) + local
        return counts, self._flat[idx]

    def sample_sums(self, lam, reps, rng):
        which = rng.choice(len(self.rows), size=reps, p=self.probs)
        return self.row_sums(lam)[which]

    def __repr__(self):
        return f"TableModel({[(p, list(xs)) for p, xs in self.rows]!r})"


BUILTIN_MODELS = {"gaussian-binary": GaussianBinary, "lattice": LatticePathological}


def make_model(name, table=None):
    """Build a model from its config name (``gaussian-binary``, ``lattice``, ``table``)."""
    if name == "table":
        if table is None:
            raise InvalidModel("model 'table' requires table rows")
        try:
            rows = [(p, list(xs)) for p, xs in table]
        except (TypeError, ValueError) as exc:
            raise InvalidModel(f"malformed table rows: {exc}") from exc
        return TableModel(rows)
    if name not in BUILTIN_MODELS:
        raise InvalidModel(f"unknown model {name!r}")
    return BUILTIN_MODELS[name]()


def laplace_mc(model, lam, reps, rng=None):
    """Monte Carlo estimate of m(lambda) from ``reps`` offspring draws.

    Returns ``(estimate, stderr)`` where ``stderr`` is complex and carries
    the standard errors of the real and imaginary parts separately.
    """
    lam = as_lambda(lam)
    reps = check_count("reps", reps, 2)
    if not bool(model.theta_in_domain(lam.real)):
        raise DomainError(f"theta={lam.real} outside the domain of {model!r}")
    rng = check_random_state(rng)
    s = model.sample_sums(lam, reps, rng)
    se_re = s.real.std(ddof=1) / math.sqrt(reps)
    se_im = s.imag.std(ddof=1) / math.sqrt(reps)
    return complex(s.mean()), complex(se_re, se_im)
