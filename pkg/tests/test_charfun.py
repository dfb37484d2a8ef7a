import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from complexbrw import DIVERGENT, GaussianBinary, LatticePathological, TableModel
from complexbrw import alpha_root, c3_check, f_ratio, log_moment_functional, ratio_curve
from complexbrw.charfun import log_ratio
from complexbrw.exceptions import ZeroTransform

from oracles import CORNER, LOG2, SQRT_2LOG2, blue_point, gauss_dlog_f, gauss_log_f, red_point

G = GaussianBinary()
L = LatticePathological()


def test_f_real_is_one():
    assert f_ratio(G, 0.7, 1) == 1.0


def test_blue_line_double_root():
    lam, a = blue_point(1.0)
    assert abs(f_ratio(G, lam, a) - 1) <= 1e-10


def test_lattice_boundary_identity():
    lam = complex(1, math.acos(math.exp(-1)))
    assert abs(f_ratio(L, lam, 2) - 1) <= 1e-10


def test_f_divergent_when_scaled_theta_leaves_domain():
    assert f_ratio(L, complex(1, 0.3), 0) is DIVERGENT


def test_zero_transform():
    # m vanishes where exp(-lambda) ... for the table 0.5 d_{-1} + 0.5 d_{1}: cosh(lambda) = 0
    t = TableModel([(1.0, [-1.0, 1.0])])
    with pytest.raises(ZeroTransform):
        f_ratio(t, complex(0, math.pi / 2), 1.5)


def test_log_moment_examples():
    lam, a = blue_point(1.0)
    assert abs(log_moment_functional(G, lam, a)) <= 1e-10
    assert abs(log_moment_functional(G, red_point(0.4), 2) - (0.16 - LOG2 / 2)) <= 1e-9
    assert abs(0.16 - LOG2 / 2 - (-0.186574)) < 1e-6
    assert abs(log_moment_functional(G, complex(CORNER, CORNER), 2)) <= 1e-10


def test_alpha_root_examples():
    a, d = alpha_root(G, SQRT_2LOG2)
    assert a == 1.0 and abs(d) <= 1e-9
    lam, alpha = blue_point(1.0)
    a, d = alpha_root(G, lam)
    assert abs(a - 1.177410) < 1e-6 and abs(d) < 1e-10
    a, d = alpha_root(G, red_point(0.4))
    assert abs(a - 2) < 1e-10 and abs(d + 0.186574) < 1e-6


def test_alpha_root_absent_outside():
    assert alpha_root(G, complex(0.2, 1.3)) is None


def test_c3_examples():
    assert c3_check(G, complex(0.3, 0.2), 2) == (True, 1.0)
    assert c3_check(L, 1.0, 2) == (True, 1.0)
    holds, w = c3_check(L, 0.01, 2)
    assert holds and w > 0


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0, 2))
def test_log_ratio_matches_closed_form(theta, eta, p):
    g = log_ratio(G, np.array([complex(theta, eta)]), p)[0]
    assert abs(g - gauss_log_f(theta, eta, p)) <= 1e-10 * max(1.0, abs(g))


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_f_at_one_at_least_one(theta, eta):
    assert f_ratio(G, complex(theta, eta), 1) >= 1 - 1e-12


@given(st.floats(0.05, 3), st.floats(-3, 3))
def test_lattice_f_at_one_at_least_one(theta, eta):
    lam = complex(theta, eta)
    if abs(L.laplace(lam)) < 1e-10 * L.laplace(theta).real:
        return
    assert f_ratio(L, lam, 1) >= 1 - 1e-12


@given(st.floats(-1.5, 1.5))
def test_real_f_one_exact(theta):
    assert f_ratio(G, theta, 1) == 1.0


@given(st.floats(0.2, 1.5), st.floats(-1.5, 1.5))
def test_alpha_root_consistency(theta, eta):
    lam = complex(theta, eta)
    r = alpha_root(G, lam)
    if r is None:
        return
    a, d = r
    assert abs(f_ratio(G, lam, a) - 1) <= 1e-10
    assert abs(log_moment_functional(G, lam, a) - d) <= 1e-9


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(1.0, 2.0))
def test_derivative_matches_finite_difference(theta, eta, p):
    lam = complex(theta, eta)
    h = 1e-5
    fd = (math.exp(gauss_log_f(theta, eta, p + h)) - math.exp(gauss_log_f(theta, eta, p - h))) / (2 * h)
    assert abs(log_moment_functional(G, lam, p) - fd) <= 1e-6 * max(1.0, abs(fd))


@given(st.floats(0.2, 3), st.floats(-3, 3), st.floats(1.0, 2.0))
def test_lattice_derivative_matches_finite_difference(theta, eta, p):
    lam = complex(theta, eta)
    if abs(L.laplace(lam)) < 1e-3:
        return
    h = 1e-5
    fd = (f_ratio(L, lam, p + h) - f_ratio(L, lam, p - h)) / (2 * h)
    assert abs(log_moment_functional(L, lam, p) - fd) <= 1e-6 * max(1.0, abs(fd))


def test_ratio_curve_grid():
    c = ratio_curve(G, red_point(0.4))
    assert c.p.size == 257 and c.p[0] == 1 and c.p[-1] == 2
    assert c.alpha_root[0] == pytest.approx(2.0)


def test_blue_segment_points_against_closed_form():
    for theta in np.linspace(CORNER + 0.01, SQRT_2LOG2 - 0.01, 7):
        lam, a = blue_point(theta)
        got, d = alpha_root(G, lam)
        assert abs(got - a) < 1e-8
        assert abs(d - math.exp(gauss_log_f(theta, lam.imag, a)) * gauss_dlog_f(theta, lam.imag, a)) < 1e-8
