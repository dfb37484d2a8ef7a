import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from complexbrw import GaussianBinary, LatticePathological, Region, TableModel, check_c2, classify, classify_many
from complexbrw import prop1_conditions
from complexbrw.classifier import ANALYTIC_FINITE

from oracles import CORNER, LOG2, SQRT_2LOG2, blue_point, gauss_boundary_distance, gauss_interior, red_point

G = GaussianBinary()
L = LatticePathological()


def test_examples():
    assert classify(G, complex(0.3, 0.4)).tag is Region.INTERIOR
    v = classify(G, blue_point(1.0)[0])
    assert v.tag is Region.BOUNDARY12 and abs(v.alpha - 1.177410) < 1e-6 and v.derivative_sign == "Zero"
    v = classify(G, red_point(0.4))
    assert v.tag is Region.BOUNDARY2 and v.derivative_sign == "Negative"
    v = classify(G, complex(CORNER, CORNER))
    assert v.tag is Region.BOUNDARY2 and v.derivative_sign == "Zero"
    v = classify(G, SQRT_2LOG2)
    assert v.tag is Region.BOUNDARY1 and v.derivative_sign == "Zero"
    assert classify(L, 0).tag is Region.OUTSIDE_DOMAIN
    assert classify(L, complex(0, 2 * math.pi)).tag is Region.OUTSIDE_DOMAIN
    assert classify(G, complex(0.2, 1.3)).tag is Region.EXTERIOR


def test_lattice_examples():
    assert classify(L, complex(1.0, 0.5)).tag is Region.INTERIOR
    v = classify(L, complex(1.0, math.acos(math.exp(-1))))
    assert v.tag is Region.BOUNDARY2


def test_accepts_tuple_and_string():
    assert classify(G, (0.3, 0.4)).tag is Region.INTERIOR
    assert classify(G, "0.3,0.4").tag is Region.INTERIOR


def test_verdict_json_roundtrip():
    d = json.loads(classify(G, red_point(0.4)).to_json())
    assert d["tag"] == "Boundary2" and d["alpha"] == pytest.approx(2.0)


@settings(max_examples=300)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_gaussian_membership_matches_inequalities(theta, eta):
    if gauss_boundary_distance(theta, eta) <= 1e-3:
        return
    tag = classify(G, complex(theta, eta)).tag
    assert (tag is Region.INTERIOR) == gauss_interior(theta, eta)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_conjugate_symmetry(theta, eta):
    a = classify(G, complex(theta, eta)).tag
    b = classify(G, complex(theta, -eta)).tag
    assert a is b


@given(st.floats(0.05, 3), st.floats(-3, 3))
def test_lattice_periodicity(theta, eta):
    a = classify(L, complex(theta, eta)).tag
    b = classify(L, complex(theta, eta + 2 * math.pi)).tag
    if a is not b:
        # allow disagreement only right at the curve
        assert abs(math.exp(-theta) - math.cos(eta)) < 1e-6


def test_classify_many_matches_single():
    lams = np.array([0.3 + 0.4j, red_point(0.4), 0.2 + 1.3j])
    assert [v.tag for v in classify_many(G, lams)] == [classify(G, z).tag for z in lams]


def test_c2_gaussian_analytic():
    c = check_c2(G, red_point(0.4), 2)
    assert c.value is ANALYTIC_FINITE and c.method == "analytic"


def test_c2_table_exact():
    t = TableModel([(0.5, [0.0]), (0.5, [0.0, 0.0])])
    c = check_c2(t, 0.0, 2)
    assert c.method == "exact" and math.isfinite(c.value) and c.stderr is None


def test_c2_lattice_mc(rng):
    c = check_c2(L, complex(1.0, 0.5), 2, reps=10**4, rng=rng)
    assert c.method == "mc" and c.stderr is not None


def test_prop1_case_i_on_red_arc(rng):
    rep = prop1_conditions(G, red_point(0.4), reps=10**4, rng=rng)
    assert rep.prop1_case == "i"
    assert rep.prop1["S2_log"].value == pytest.approx(0.16 - LOG2 / 2, abs=1e-9)


def test_prop1_case_ii_at_corner(rng):
    rep = prop1_conditions(G, complex(CORNER, CORNER), reps=10**4, rng=rng)
    assert rep.prop1_case == "ii"
    assert set(rep.prop1) == {"S2_log", "S2_log2", "W1_logplus_W1", "W1_logplus2_W1", "Wtilde_logplus_Wtilde"}
    json.dumps(rep.to_dict())
