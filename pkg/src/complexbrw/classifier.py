"""Classification of complex parameters into convergence regions.

The decision order for a parameter lambda = theta + i eta is

1. theta outside the domain of m          -> OutsideDomain
2. the model certifies an infinite moment -> MomentBlowup
3. min_{(1,2]} f < 1 - tol                -> Interior
4. a root alpha of f = 1 with f'(alpha) <= tol
                                          -> Boundary1 / Boundary12 / Boundary2
5. no such root                           -> Exterior
6. anything undecidable                   -> Indeterminate
"""
from dataclasses import dataclass, field
from enum import Enum
import json
import math
from typing import Optional, Union

import numpy as np

from . import charfun
from .models import GaussianBinary, TableModel
from ._validation import as_lambda, as_lambda_array, check_count, check_random_state

ALPHA_TOL = 1e-6


class Region(str, Enum):
    OUTSIDE_DOMAIN = "OutsideDomain"
    INTERIOR = "Interior"
    BOUNDARY1 = "Boundary1"
    BOUNDARY12 = "Boundary12"
    BOUNDARY2 = "Boundary2"
    MOMENT_BLOWUP = "MomentBlowup"
    EXTERIOR = "Exterior"
    INDETERMINATE = "Indeterminate"

    def __str__(self):
        return self.value

    @property
    def is_boundary(self):
        return self in (Region.BOUNDARY1, Region.BOUNDARY12, Region.BOUNDARY2)


REGION_ORDER = list(Region)


@dataclass
class RegionVerdict:
    lam: complex
    tag: Region
    alpha: Optional[float] = None
    derivative: Optional[float] = None
    derivative_sign: Optional[str] = None  # "Negative" | "Zero" on boundary verdicts
    witness_p: Optional[float] = None
    f_min: Optional[float] = None
    reason: Optional[str] = None

    def to_dict(self):
        return {
            "lambda": [self.lam.real, self.lam.imag],
            "tag": self.tag.value,
            "alpha": self.alpha,
            "derivative": self.derivative,
            "derivative_sign": self.derivative_sign,
            "witness_p": self.witness_p,
            "f_min": self.f_min,
            "reason": self.reason,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def _opt(x):
    return None if x is None or not np.isfinite(x) else float(x)


def classify_many(model, lams, tol=charfun.DEFAULT_TOL, alpha_tol=ALPHA_TOL):
    """Vectorised classification; returns a list of ``RegionVerdict``."""
    lams = as_lambda_array(lams)
    res = charfun.analyze(model, lams, tol)
    blowup = np.asarray(model.moment_blowup(lams.real), dtype=bool)
    out = []
    for k, lam in enumerate(lams):
        lam = complex(lam)
        if not res.in_domain[k]:
            out.append(RegionVerdict(lam, Region.OUTSIDE_DOMAIN, reason="m(theta) diverges"))
            continue
        if blowup[k]:
            out.append(RegionVerdict(lam, Region.MOMENT_BLOWUP,
                                     reason="E[Z_1(theta)^gamma] infinite for all gamma > 1"))
            continue
        if res.zero[k]:
            out.append(RegionVerdict(lam, Region.INDETERMINATE, reason="ZeroTransform: m(lambda) = 0"))
            continue
        if not np.isfinite(res.g_min[k]):
            out.append(RegionVerdict(lam, Region.INDETERMINATE, reason="f not finite on [1, 2]"))
            continue
        g_min, p_min = res.g_min[k], res.p_min[k]
        f_min = math.exp(g_min)
        if g_min < -tol and p_min > 1.0:
            out.append(RegionVerdict(lam, Region.INTERIOR, witness_p=float(p_min), f_min=f_min))
            continue
        alpha, deriv = res.alpha[k], res.derivative[k]
        if np.isfinite(alpha) and deriv <= tol:
            if abs(alpha - 1.0) <= alpha_tol:
                tag = Region.BOUNDARY1
            elif abs(alpha - 2.0) <= alpha_tol:
                tag = Region.BOUNDARY2
            else:
                tag = Region.BOUNDARY12
            sign = "Zero" if abs(deriv) <= tol else "Negative"
            out.append(RegionVerdict(lam, tag, float(alpha), float(deriv), sign,
                                     witness_p=float(p_min), f_min=f_min))
            continue
        if not np.isfinite(alpha) or deriv > tol:
            # no (C1) root; or the trivial root f(1) = 1 of a real-type
            # parameter with f increasing away from it
            out.append(RegionVerdict(lam, Region.EXTERIOR, _opt(alpha), _opt(deriv),
                                     witness_p=float(p_min), f_min=f_min))
            continue
        out.append(RegionVerdict(lam, Region.INDETERMINATE, reason="no decision rule applied"))
    return out


def classify(model, lam, tol=charfun.DEFAULT_TOL, alpha_tol=ALPHA_TOL):
    """Classify a single parameter ``lam`` (complex, ``(theta, eta)`` or ``"theta,eta"``)."""
    return classify_many(model, np.array([as_lambda(lam)]), tol, alpha_tol)[0]


# ---------------------------------------------------------------------------
# side conditions


class AnalyticFinite:
    """Marker: the functional is finite by an analytic argument."""

    def __repr__(self):
        return "AnalyticFinite"


ANALYTIC_FINITE = AnalyticFinite()


@dataclass
class Functional:
    value: Union[float, AnalyticFinite]
    stderr: Optional[float] = None
    method: str = "exact"  # exact | analytic | mc

    def to_dict(self):
        v = self.value
        return {"value": repr(v) if isinstance(v, AnalyticFinite) else v,
                "stderr": self.stderr, "method": self.method}


@dataclass
class ConditionReport:
    lam: complex
    alpha: float
    c2: Optional[Functional] = None
    prop1: dict = field(default_factory=dict)
    prop1_case: Optional[str] = None  # "i" | "ii" | None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "lambda": [self.lam.real, self.lam.imag],
            "alpha": self.alpha,
            "c2": None if self.c2 is None else self.c2.to_dict(),
            "prop1": {k: v.to_dict() for k, v in self.prop1.items()},
            "prop1_case": self.prop1_case,
            "notes": list(self.notes),
        }


def _log_plus(x):
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(x), 0.0)


def _first_generation(model, lam, alpha, reps, rng):
    """Per-sample quantities of the first generation.

    Returns ``(prob, Z1, W1, S2, S2log2, Wtilde)`` where ``prob`` are sample
    probabilities (exact for tables, 1/reps otherwise) and ``S2`` is
    sum |L|^2 log|L|.
    """
    labs = float(model.log_abs_m(np.array([lam]))[0])
    arg = float(model.arg_m(np.array([lam]))[0])
    if isinstance(model, TableModel):
        n = len(model.rows)
        prob = model.probs
        parent = np.repeat(np.arange(n), model.sizes)
        mult = np.ones(parent.size)
        x = model.atoms
        exact = True
    else:
        parent, mult, x = model.sample_atoms(reps, rng)
        n = reps
        prob = np.full(reps, 1.0 / reps)
        exact = False
    logl = -lam.real * x - labs
    phase = -lam.imag * x - arg
    mod = np.exp(logl)
    z_re = np.bincount(parent, mult * mod * np.cos(phase), minlength=n)
    z_im = np.bincount(parent, mult * mod * np.sin(phase), minlength=n)
    z1 = z_re + 1j * z_im
    w1 = np.bincount(parent, mult * np.exp(alpha * logl), minlength=n)
    l2 = np.exp(2 * logl)
    s2 = np.bincount(parent, mult * l2 * logl, minlength=n)
    s2log2 = np.bincount(parent, mult * l2 * logl**2, minlength=n)
    wtilde = np.bincount(parent, mult * l2 * np.maximum(-logl, 0.0), minlength=n)
    return prob, z1, w1, s2, s2log2, wtilde, exact


def _expect(prob, values, exact):
    mean = float(np.dot(prob, values))
    if exact:
        return Functional(mean, None, "exact")
    se = float(np.std(values, ddof=1) / math.sqrt(values.size))
    return Functional(mean, se, "mc")


def check_c2(model, lam, alpha, eps=0.5, reps=10**5, rng=None):
    """E[|Z_1|^alpha log_+^{2+eps} |Z_1|] at ``lam``.

    Gaussian binary: finite analytically (every real moment of Z_1(theta) is
    finite).  Tables: exact finite sum.  Otherwise a Monte Carlo estimate of
    the functional; a finite sample mean cannot certify finiteness, which is
    recorded in ``method == "mc"``.
    """
    lam = as_lambda(lam)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(model, GaussianBinary):
        return Functional(ANALYTIC_FINITE, None, "analytic")
    reps = check_count("reps", reps, 1000)
    rng = check_random_state(rng)
    prob, z1, *_rest, exact = _first_generation(model, lam, alpha, reps, rng)
    absz = np.abs(z1)
    vals = absz**alpha * _log_plus(absz) ** (2 + eps)
    return _expect(prob, vals, exact)


PROP1_KEYS = ("S2_log", "W1_logplus_W1", "S2_log2", "W1_logplus2_W1", "Wtilde_logplus_Wtilde")


def prop1_conditions(model, lam, reps=10**5, rng=None, alpha=2.0, tol=charfun.DEFAULT_TOL):
    """The five functionals entering the divergence criteria at alpha = 2.

    ``S2_log``  = E[sum |L|^2 log|L|]      (closed form via f'(2))
    ``S2_log2`` = E[sum |L|^2 log^2|L|]    (closed form via f''(2))
    and E[W_1 log_+ W_1], E[W_1 log_+^2 W_1], E[W~_1 log_+ W~_1] with
    W~_1 = sum |L|^2 log_-|L| (exact for tables, Monte Carlo otherwise).
    """
    lam = as_lambda(lam)
    rng = check_random_state(rng)
    reps = check_count("reps", reps, 2)
    prob, z1, w1, s2, s2log2, wtilde, exact = _first_generation(model, lam, alpha, reps, rng)
    report = ConditionReport(lam, alpha)
    report.prop1["S2_log"] = Functional(charfun.log_moment_functional(model, lam, alpha), None, "analytic")
    report.prop1["S2_log2"] = Functional(charfun.second_log_moment(model, lam, alpha), None, "analytic")
    report.prop1["W1_logplus_W1"] = _expect(prob, w1 * _log_plus(w1), exact)
    report.prop1["W1_logplus2_W1"] = _expect(prob, w1 * _log_plus(w1) ** 2, exact)
    report.prop1["Wtilde_logplus_Wtilde"] = _expect(prob, wtilde * _log_plus(wtilde), exact)
    d = report.prop1["S2_log"].value
    if abs(d) <= tol:
        holds, witness = charfun.c3_check(model, lam, alpha)
        report.prop1_case = "ii" if holds else None
        report.notes.append(f"C3 witness vartheta={witness}")
    elif d < 0:
        report.prop1_case = "i"
    else:
        report.notes.append("E[sum |L|^2 log|L|] > 0: (C1) fails at alpha = 2")
    return report
