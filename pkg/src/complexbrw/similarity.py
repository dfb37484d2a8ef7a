"""Similarity-matrix weights and the vector martingale Z_n w.

A similarity is a positive scale times an orthogonal matrix, so its operator
norm is the scale and norms multiply under composition.  In dimension 2 the
orthogonal factor is stored as a rotation angle and a reflection flag,
R(a) F^r with F = diag(1, -1); the complex number a + bi corresponds to the
rotation-scaling matrix [[a, -b], [b, a]].
"""
from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np

from .exceptions import DimensionMismatch, NoUnitEigenvalue, InvalidModel
from .models import wrap_phase
from .simulator import _weight_constants, run as run_complex
from ._validation import as_lambda, check_count, check_random_state, stream_for

EIG_TOL = 1e-8


def rotation_matrix(angle, reflect=False):
    c, s = math.cos(angle), math.sin(angle)
    if reflect:
        return np.array([[c, s], [s, -c]])
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Similarity:
    """scale * R(rotation) F^reflect (d = 2), or scale * orth for a general orthogonal matrix."""

    scale: float
    rotation: float = 0.0
    reflect: bool = False
    orth: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.orth is not None:
            o = np.asarray(self.orth, dtype=float)
            if o.ndim != 2 or o.shape[0] != o.shape[1]:
                raise DimensionMismatch("orthogonal factor must be square")
            if not np.allclose(o @ o.T, np.eye(o.shape[0]), atol=1e-10):
                raise ValueError("orthogonal factor is not orthogonal")
            object.__setattr__(self, "orth", o)
        else:
            object.__setattr__(self, "rotation", float(wrap_phase(self.rotation)))

    @property
    def dim(self):
        return 2 if self.orth is None else self.orth.shape[0]

    @property
    def parametric(self):
        return self.orth is None

    def orthogonal(self):
        return rotation_matrix(self.rotation, self.reflect) if self.orth is None else self.orth

    def matrix(self):
        return self.scale * self.orthogonal()

    def norm(self):
        """Operator norm, which equals ``scale``."""
        return self.scale

    def __matmul__(self, other):
        return compose(self, other)

    @classmethod
    def identity(cls, dim=2):
        return cls(1.0) if dim == 2 else cls(1.0, orth=np.eye(dim))

    @classmethod
    def from_complex(cls, z):
        z = complex(z)
        return cls(abs(z), math.atan2(z.imag, z.real))


def compose(a, b):
    """The product a b (apply b first, then a)."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions {a.dim} and {b.dim} differ")
    scale = a.scale * b.scale
    if a.parametric and b.parametric:
        # R(x) F R(y) = R(x - y) F
        rot = a.rotation - b.rotation if a.reflect else a.rotation + b.rotation
        return Similarity(scale, rot, a.reflect != b.reflect)
    return Similarity(scale, orth=a.orthogonal() @ b.orthogonal())


# ---------------------------------------------------------------------------
# models


class SimilarityModel:
    """Offspring law over lists of 2-d similarities."""

    dim = 2

    def sample_generation(self, n_parents, rng):
        """Returns (counts, log_scales, rotations, reflects) for ``n_parents`` parents."""
        raise NotImplementedError

    def mean_matrix(self, reps=10**5, rng=None):
        """M = E[sum_{|u|=1} L(u)]; Monte Carlo unless overridden."""
        rng = check_random_state(rng)
        counts, ls, rot, refl = self.sample_generation(reps, rng)
        s = np.exp(ls)
        c, sn = np.cos(rot), np.sin(rot)
        sign = np.where(refl, -1.0, 1.0)
        m = np.array([[np.sum(s * c), -np.sum(s * sn * sign)],
                      [np.sum(s * sn), np.sum(s * c * sign)]])
        return m / reps

    def expected_scale_power(self, alpha, reps=10**5, rng=None):
        """E[sum scale(u)^alpha] with its standard error."""
        rng = check_random_state(rng)
        counts, ls, _, _ = self.sample_generation(reps, rng)
        parent = np.repeat(np.arange(reps), counts)
        per = np.bincount(parent, np.exp(alpha * ls), minlength=reps)
        return float(per.mean()), float(per.std(ddof=1) / math.sqrt(reps))


class TableSimilarityModel(SimilarityModel):
    """Finitely many rows (probability, [Similarity, ...]) in parametric 2-d form."""

    def __init__(self, rows):
        probs = np.array([p for p, _ in rows], dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidModel("row probabilities must be nonnegative and sum to 1")
        for _, sims in rows:
            if any(not s.parametric for s in sims):
                raise DimensionMismatch("table similarity models are 2-d parametric")
        self.rows = [(float(p), list(s)) for p, s in rows]
        self.probs = probs

    def mean_matrix(self, reps=None, rng=None):
        m = np.zeros((2, 2))
        for p, sims in self.rows:
            for s in sims:
                m += p * s.matrix()
        return m

    def sample_generation(self, n_parents, rng):
        which = rng.choice(len(self.rows), size=int(n_parents), p=self.probs)
        counts = np.array([len(self.rows[k][1]) for k in which], dtype=np.int64)
        sims = [s for k in which for s in self.rows[k][1]]
        ls = np.array([math.log(s.scale) for s in sims])
        rot = np.array([s.rotation for s in sims])
        refl = np.array([s.reflect for s in sims], dtype=bool)
        return counts, ls, rot, refl


class ComplexDerivedSimilarityModel(SimilarityModel):
    """Child weight e^{-lambda X_j} / m(lambda) of a scalar model as a rotation-scaling.

    Sampling consumes the random stream exactly like the base model, so the
    two engines driven by one stream build the same tree.
    """

    def __init__(self, base, lam):
        self.base = base
        self.lam = as_lambda(lam)
        self.log_abs_m, self.arg_m = _weight_constants(base, self.lam)

    def sample_generation(self, n_parents, rng, cap=None):
        counts, disp = self.base.sample_generation(n_parents, rng, cap=cap)
        ls = -self.lam.real * disp - self.log_abs_m
        rot = wrap_phase(-self.lam.imag * disp - self.arg_m)
        return counts, ls, np.atleast_1d(rot), np.zeros(disp.shape[0], dtype=bool)

    def mean_matrix(self, reps=None, rng=None):
        # E[sum e^{-lambda X}/m(lambda)] = 1
        return np.eye(2)


def complex_to_similarity(model, lam):
    return ComplexDerivedSimilarityModel(model, lam)


@dataclass
class Eigenvector:
    w: np.ndarray
    residual: float
    eigenspace_dim: int


def mean_matrix_eigvec(model_or_matrix, tol=EIG_TOL):
    """Unit right eigenvector of M for the eigenvalue 1.

    The eigenspace is the numerical null space of M - I (singular values
    <= tol).  The deterministic start e_1/|e_1| is projected onto it; if the
    projection vanishes the first null vector is used.
    """
    if isinstance(model_or_matrix, SimilarityModel):
        m = model_or_matrix.mean_matrix()
    else:
        m = np.asarray(model_or_matrix, dtype=float)
    if not np.all(np.isfinite(m)):
        raise NoUnitEigenvalue("mean matrix has non-finite entries")
    d = m.shape[0]
    _, sv, vt = np.linalg.svd(m - np.eye(d))
    null = vt[sv <= tol]
    if null.shape[0] == 0:
        raise NoUnitEigenvalue(f"1 is not an eigenvalue of M within {tol} (min singular value {sv.min():.3g})")
    start = np.zeros(d)
    start[0] = 1.0
    w = null.T @ (null @ start)
    if np.linalg.norm(w) < 1e-6:
        w = null[0].copy()
    w /= np.linalg.norm(w)
    if w[np.flatnonzero(np.abs(w) > 1e-12)[0]] < 0:
        w = -w
    return Eigenvector(w, float(np.linalg.norm(m @ w - w)), int(null.shape[0]))


# ---------------------------------------------------------------------------
# engine


@dataclass
class SimilarityGeneration:
    n: int
    log_scales: np.ndarray
    rotations: np.ndarray
    reflects: np.ndarray

    @property
    def population(self):
        return self.log_scales.shape[0]


def root(dim=2):
    return SimilarityGeneration(0, np.zeros(1), np.zeros(1), np.zeros(1, dtype=bool))


def step(gen, model, rng, cap=None):
    if cap is None:
        counts, ls, rot, refl = model.sample_generation(gen.population, rng)
    else:
        counts, ls, rot, refl = model.sample_generation(gen.population, rng, cap=cap)
    parent = np.repeat(np.arange(gen.population), counts)
    pr = gen.reflects[parent]
    new_rot = wrap_phase(gen.rotations[parent] + np.where(pr, -rot, rot))
    return SimilarityGeneration(gen.n + 1, gen.log_scales[parent] + ls, np.atleast_1d(new_rot), pr != refl)


def vector_martingale(gen, w):
    """Z_n w = sum_{|u|=n} L(u) w, summed per component with ``math.fsum``."""
    w = np.asarray(w, dtype=float)
    s = np.exp(gen.log_scales)
    c, sn = np.cos(gen.rotations), np.sin(gen.rotations)
    w2 = np.where(gen.reflects, -w[1], w[1])
    x = s * (c * w[0] - sn * w2)
    y = s * (sn * w[0] + c * w2)
    return np.array([math.fsum(x), math.fsum(y)])


def scale_martingale(gen, alpha):
    """W_n = sum scale(u)^alpha."""
    return math.fsum(np.exp(alpha * gen.log_scales))


@dataclass
class VectorTrace:
    zw: np.ndarray            # (N+1, 2)
    w_mart: Optional[np.ndarray]
    pop: np.ndarray


def run(model, n_gens, w, rng=None, alpha=None, cap=None):
    n_gens = check_count("n_gens", n_gens, 0)
    rng = check_random_state(rng)
    gen = root()
    zw = np.empty((n_gens + 1, 2))
    wm = None if alpha is None else np.empty(n_gens + 1)
    pop = np.empty(n_gens + 1, dtype=np.int64)
    for n in range(n_gens + 1):
        if n > 0:
            gen = step(gen, model, rng, cap)
        zw[n] = vector_martingale(gen, w)
        pop[n] = gen.population
        if wm is not None:
            wm[n] = scale_martingale(gen, alpha)
    return VectorTrace(zw, wm, pop)


@dataclass
class EquivalenceReport:
    lam: complex
    n_gens: int
    reps: int
    max_z_discrepancy: list      # per generation, max over replicates and components
    max_w_discrepancy: list
    eigvec: list
    residual: float

    @property
    def max_discrepancy(self):
        return max(max(self.max_z_discrepancy), max(self.max_w_discrepancy))


def compare_with_complex(model, lam, n_gens=10, reps=1, seed=0, alpha=1.5):
    """Run the complex simulator and the similarity engine on one stream per replicate.

    Returns the largest per-generation discrepancy between (Re Z_n, Im Z_n)
    and Z_n w, and between the two W_n.
    """
    lam = as_lambda(lam)
    sim_model = complex_to_similarity(model, lam)
    ev = mean_matrix_eigvec(sim_model)
    dz = np.zeros(n_gens + 1)
    dw = np.zeros(n_gens + 1)
    for k in range(reps):
        tr = run_complex(model, lam, n_gens, stream_for(seed, k), alpha=alpha)
        vt = run(sim_model, n_gens, ev.w, stream_for(seed, k), alpha=alpha)
        zc = np.column_stack([tr.z.real, tr.z.imag])
        dz = np.maximum(dz, np.abs(zc - vt.zw).max(axis=1))
        dw = np.maximum(dw, np.abs(tr.w - vt.w_mart))
    return EquivalenceReport(lam, n_gens, reps, dz.tolist(), dw.tolist(), ev.w.tolist(), ev.residual)
