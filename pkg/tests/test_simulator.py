import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from complexbrw import GaussianBinary, LatticePathological, TableModel
from complexbrw import run, simulate_ensemble, sup_weight_tail, truncated_run
from complexbrw.exceptions import NotNormalized, PopulationCapExceeded
from complexbrw.simulator import sample_z_batch, traces_to_array

from oracles import blue_point, enumerate_z, red_point, table_m, total_variation

G = GaussianBinary()
UNARY_ROWS = [(0.5, [0.0]), (0.5, [0.0, 0.0])]
MIXED_ROWS = [(0.3, [0.5]), (0.7, [-0.2, 1.0])]


def test_root_is_one():
    tr = run(G, complex(0.3, 0.4), 0, 1)
    assert tr.z[0] == 1 and tr.pop[0] == 1


def test_seed_reproducible():
    a = run(G, complex(0.3, 0.4), 6, 11, alpha=1.5)
    b = run(G, complex(0.3, 0.4), 6, 11, alpha=1.5)
    assert np.array_equal(a.z, b.z) and np.array_equal(a.w, b.w)


def test_gaussian_population_doubles():
    tr = run(G, 0.5, 8, 0)
    assert tr.pop.tolist() == [2**n for n in range(9)]


def test_ensemble_thread_invariance():
    lam = complex(0.3, 0.4)
    a = traces_to_array(simulate_ensemble(G, lam, 6, 16, seed=3, threads=1))
    b = traces_to_array(simulate_ensemble(G, lam, 6, 16, seed=3, threads=8))
    assert np.array_equal(a, b)


def test_truncation_hand_computed():
    # m = 2 cosh(lambda); at lambda = 1 + i pi/2 the weight of the x = -1 child exceeds 1.1
    rows = [(1.0, [-1.0, 1.0])]
    lam = complex(1, math.pi / 2)
    m = table_m(rows, lam)
    lm, lp = cmath.exp(lam) / m, cmath.exp(-lam) / m
    assert abs(lm) > 1.1 > abs(lp)
    tr = truncated_run(TableModel(rows), lam, 1.1, 2, 0)
    z1 = lm + lp
    assert abs(tr.z[1] - z1) < 1e-14
    assert abs(tr.zt[1] - z1) < 1e-14
    # only the kept lineage (+1) branches further; its children sum to L(+1) Z_1
    expected = lm + lp * z1
    assert abs(tr.zt[2] - expected) < 1e-13
    assert abs(tr.zt[2] - (z1 + lp * (z1 - 1))) < 1e-13


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_truncation_inactive_matches_z(seed):
    tr = truncated_run(G, complex(0.3, 0.4), 1e12, 6, seed)
    assert np.array_equal(tr.z, tr.zt)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_w_nonnegative(seed):
    lam, a = blue_point(1.0)
    tr = run(G, lam, 6, seed, alpha=a)
    assert np.all(tr.w >= 0)


def test_population_cap():
    with pytest.raises(PopulationCapExceeded):
        run(G, 0.5, 12, 0, cap=1000)


def test_thinning_flags_trace():
    tr = run(G, 0.5, 12, 0, cap=1000, thinning=True)
    assert tr.thinned and tr.pop[-1] <= 1300


def test_mean_one_batch(rng):
    lam = red_point(0.4)
    z, w = sample_z_batch(G, lam, 1, 10**4, rng, alpha=2.0)
    se_re = z[:, 1].real.std(ddof=1) / 100
    se_im = z[:, 1].imag.std(ddof=1) / 100
    assert abs(z[:, 1].real.mean() - 1) <= 5 * se_re
    assert abs(z[:, 1].imag.mean()) <= 5 * se_im
    assert abs(w[:, 1].mean() - 1) <= 5 * w[:, 1].std(ddof=1) / 100


@pytest.mark.parametrize("rows,lam", [(UNARY_ROWS, 0.0), (MIXED_ROWS, complex(0.4, 0.7))])
def test_bruteforce_law(rows, lam, rng):
    model = TableModel(rows, supercritical=False) if rows is UNARY_ROWS else TableModel(rows)
    z = sample_z_batch(model, lam, 3, 10**5, rng)
    for n in (1, 2, 3):
        assert total_variation(enumerate_z(rows, lam, n), z[:, n]) <= 0.02


def test_batch_matches_run_distribution(rng):
    lam = complex(0.3, 0.4)
    z = sample_z_batch(G, lam, 3, 4000, rng)[:, 3]
    y = traces_to_array(simulate_ensemble(G, lam, 3, 4000, seed=1))[:, 3]
    se = math.hypot(z.real.std(), y.real.std()) / math.sqrt(4000)
    assert abs(z.real.mean() - y.real.mean()) <= 5 * se


def test_sup_weight_tail_requires_c1():
    with pytest.raises(NotNormalized):
        sup_weight_tail(G, complex(0.3, 0.4), 1.5, 5, 10, 3)


def test_sup_weight_tail_bound(rng):
    lam = red_point(0.4)
    p, se = sup_weight_tail(G, lam, 2.0, 5.0, 2000, 20, rng)
    assert p <= 5.0**-2 + 3 * se


def test_recursion_invariance():
    # accumulated and direct log-weights agree
    from complexbrw.simulator import root_generation, step
    lam = complex(0.5, 0.3)
    rng = np.random.default_rng(0)
    gen = root_generation(G, lam)
    for _ in range(8):
        gen = step(gen, G, rng)
    assert np.allclose(gen.logweights, gen.direct_logweights(), atol=1e-10)
