"""Acceptance criteria 1-12.  Each test records a pass/fail line (printed in
the terminal summary) before asserting."""
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from complexbrw import (
    GaussianBinary, GridSpec, LatticePathological, Region, TableModel, TVFunction, alpha_root, classify,
    classify_many, convergence_verdict, fixed_point_selfconsistency, phase_raster, select_u0,
    simulate_ensemble, sup_weight_tail,
)
from complexbrw.similarity import compare_with_complex
from complexbrw.simulator import sample_z_batch
from complexbrw.spine import CLOSED_FORM, WEIGHTED_RESAMPLING, spine_expectation, spine_mean_step
from complexbrw.tvfun import property_report

from conftest import record
from oracles import (
    CORNER, LOG2, SQRT_2LOG2, blue_point, enumerate_z, gauss_boundary_distance, gauss_interior,
    lattice_interior, red_point, total_variation,
)

G = GaussianBinary()
L = LatticePathological()
BOUNDARY_POINTS = [
    (blue_point(0.8)[0], blue_point(0.8)[1]),
    (blue_point(1.0)[0], blue_point(1.0)[1]),
    (red_point(0.3), 2.0),
    (red_point(0.4), 2.0),
    (complex(CORNER, CORNER), 2.0),
]


def test_criterion_01_classifier_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    pts = rng.uniform(-2, 2, (1000, 2))
    verdicts = classify_many(G, pts[:, 0] + 1j * pts[:, 1])
    checked = wrong = 0
    for (t, e), v in zip(pts, verdicts):
        if gauss_boundary_distance(t, e) <= 1e-3:
            continue
        checked += 1
        wrong += (v.tag is Region.INTERIOR) != gauss_interior(t, e)
    elapsed = time.perf_counter() - t0
    ok = wrong == 0 and elapsed < 60
    record(1, ok, f"{checked - wrong}/{checked} agree, {elapsed:.1f}s")
    assert ok


def test_criterion_02_boundary_alpha():
    rng = np.random.default_rng(7)
    worst_a = worst_d = 0.0
    for theta in rng.uniform(CORNER + 1e-3, SQRT_2LOG2 - 1e-3, 20):
        st, se = rng.choice([-1, 1], 2)
        lam = complex(st * theta, se * (SQRT_2LOG2 - theta))
        # f depends on theta only through |theta| for this model
        a, d = alpha_root(G, lam)
        worst_a = max(worst_a, abs(a - SQRT_2LOG2 / theta))
        worst_d = max(worst_d, abs(d))
    for theta in rng.uniform(-CORNER + 1e-3, CORNER - 1e-3, 20):
        lam = complex(theta, rng.choice([-1, 1]) * math.sqrt(LOG2 - theta * theta))
        a, d = alpha_root(G, lam)
        worst_a = max(worst_a, abs(a - 2))
        worst_d = max(worst_d, abs(d - (theta * theta - LOG2 / 2)))
    ok = worst_a <= 1e-8 and worst_d <= 1e-8
    record(2, ok, f"max |alpha err| {worst_a:.1e}, max |derivative err| {worst_d:.1e}")
    assert ok


def test_criterion_03_lattice_phase():
    spec = GridSpec((0.0, 4.0), (-2.0, 8.0), 201, 201)
    grid = phase_raster(L, spec, threads=8)
    th, et = np.meshgrid(grid.theta, grid.eta)
    truth = np.vectorize(lattice_interior)(th, et)
    band = np.zeros_like(truth)
    padded = np.pad(truth, 1, mode="edge")
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            band |= padded[1 + di:1 + di + truth.shape[0], 1 + dj:1 + dj + truth.shape[1]] != truth
    got = np.vectorize(lambda r: r is Region.INTERIOR)(grid.tags)
    frac = float((got == truth)[~band].mean())
    copy = bool(grid.tag_at(1.0, 2 * math.pi + 0.5) is Region.INTERIOR)
    outside = (classify(L, 0).tag is Region.OUTSIDE_DOMAIN
               and classify(L, complex(0, 2 * math.pi)).tag is Region.OUTSIDE_DOMAIN)
    ok = frac >= 0.99 and copy and outside
    record(3, ok, f"agreement {frac:.5f} outside band, shifted copy {copy}, lambda=0,2pi i OutsideDomain {outside}")
    assert ok


def test_criterion_04_martingale_sanity():
    rng = np.random.default_rng(11)
    worst = 0.0
    for lam, alpha in BOUNDARY_POINTS:
        z, w = sample_z_batch(G, lam, 1, 10**4, rng, alpha=alpha)
        z1, w1 = z[:, 1], w[:, 1]
        for x, target in ((z1.real, 1.0), (z1.imag, 0.0), (w1, 1.0)):
            se = x.std(ddof=1) / math.sqrt(x.size)
            worst = max(worst, abs(x.mean() - target) / se)
    tvs = []
    for rows, lam, sc in (([(0.5, [0.0]), (0.5, [0.0, 0.0])], 0.0, False),
                          ([(0.3, [0.5]), (0.7, [-0.2, 1.0])], complex(0.4, 0.7), True)):
        z = sample_z_batch(TableModel(rows, supercritical=sc), lam, 3, 10**5, rng)
        tvs.append(total_variation(enumerate_z(rows, lam, 3), z[:, 3]))
    ok = worst <= 5 and max(tvs) <= 0.02
    record(4, ok, f"max |mean - 1|/stderr {worst:.2f}, TV {tvs[0]:.4f} / {tvs[1]:.4f}")
    assert ok


def test_criterion_05_convergence_surrogate():
    lam, _ = blue_point(1.0)
    t0 = time.perf_counter()
    traces = simulate_ensemble(G, lam, 18, 200, seed=0, threads=8)
    rep = convergence_verdict(traces, 1.1)
    elapsed = time.perf_counter() - t0
    ok = rep.verdict == "Converged" and rep.trend_p_decreasing < 0.05 and elapsed <= 300
    record(5, ok, f"verdict {rep.verdict}, slope {rep.slope:.3f} CI [{rep.slope_ci[0]:.3f}, {rep.slope_ci[1]:.3f}], "
                  f"trend p {rep.trend_p_decreasing:.2g}, {elapsed:.0f}s")
    assert ok


def test_criterion_06_divergence_surrogate():
    details, ok = [], True
    for name, lam, expected in (("red arc", red_point(0.4), 0.75), ("corner", complex(CORNER, CORNER), 0.375)):
        traces = simulate_ensemble(G, lam, 18, 200, seed=0, threads=8)
        rep = convergence_verdict(traces, 1.5)
        ok &= rep.verdict == "Diverged" and rep.slope_ci[0] >= 0.1
        details.append(f"{name} {rep.verdict} slope {rep.slope:.2f} (order {expected}) "
                       f"CI [{rep.slope_ci[0]:.2f}, {rep.slope_ci[1]:.2f}]")
    record(6, ok, "; ".join(details))
    assert ok


def test_criterion_07_sup_weight_tail():
    rng = np.random.default_rng(3)
    worst = -math.inf
    for lam, alpha in (BOUNDARY_POINTS[1], BOUNDARY_POINTS[3], BOUNDARY_POINTS[4]):
        for t in (5.0, 10.0, 20.0):
            p, se = sup_weight_tail(G, lam, alpha, t, 10**4, 30, rng)
            worst = max(worst, p - (t**-alpha + 3 * se))
    ok = worst <= 0
    record(7, ok, f"max(estimate - bound - 3 se) = {worst:.4f}")
    assert ok


def test_criterion_08_tv_properties():
    fails, u0s = [], {}
    for alpha in (1.2, 1.5, 1.9):
        for delta in (0.5, 1.5, 3.0):
            u0 = select_u0(alpha, delta)
            u0s[(alpha, delta)] = u0
            rep = property_report(TVFunction(alpha, delta, u0), n=10**4, rng=0)
            fails += [f"{alpha},{delta}:{k}" for k, v in rep.checks.items() if not v]
    ok = not fails
    record(8, ok, f"u0 {sorted(set(u0s.values()))}, failures {fails or 'none'}")
    assert ok


def test_criterion_09_many_to_one():
    rng = np.random.default_rng(5)
    lam, a = blue_point(1.0)
    b_est, b_se = spine_expectation(G, lam, a, lambda s: s, 10**5, rng)
    r_est, r_se = spine_expectation(G, red_point(0.4), 2.0, lambda s: s, 10**5, rng)
    c_est, c_se = spine_mean_step(G, red_point(0.4), 2.0, 10**5, rng, CLOSED_FORM)
    w_est, w_se = spine_mean_step(G, red_point(0.4), 2.0, 10**5, rng, WEIGHTED_RESAMPLING)
    zb = abs(b_est) / b_se
    zr = abs(r_est - 0.186574) / r_se
    zc = abs(c_est - w_est) / math.hypot(c_se, w_se)
    ok = zb <= 5 and zr <= 5 and zc <= 5
    record(9, ok, f"blue E[S1] {b_est:.4f}+-{b_se:.4f}, red {r_est:.5f}+-{r_se:.5f}, "
                  f"closed form vs resampling z={zc:.2f}")
    assert ok


def test_criterion_10_similarity_equivalence():
    worst, resid = 0.0, 0.0
    for lam in (complex(0.3, 0.4), blue_point(1.0)[0], red_point(0.4)):
        rep = compare_with_complex(G, lam, n_gens=10, reps=3, seed=0)
        worst = max(worst, rep.max_discrepancy)
        resid = max(resid, rep.residual)
    ok = worst <= 1e-10 and resid <= 1e-8
    record(10, ok, f"max discrepancy {worst:.1e}, eigenvector residual {resid:.1e}")
    assert ok


def test_criterion_11_selfconsistency():
    rng = np.random.default_rng(9)
    lam = complex(0.3, 0.4)
    pos = fixed_point_selfconsistency(G, lam, 4, 2000, rng)
    neg = fixed_point_selfconsistency(G, lam, 4, 2000, rng, lam_b=complex(0.5, 0.1))
    ok = pos.p_value > 0.01 and neg.p_value < 0.01
    record(11, ok, f"positive control p={pos.p_value:.3f}, negative control p={neg.p_value:.3f}")
    assert ok


CLI_RUNS = [
    ["classify", "--lambda", "0.3,0.4", "--lambda", "0.4,0.7301692821256899"],
    ["--format", "csv", "classify", "--lambda", "0.3,0.4"],
    ["--format", "csv", "phase", "--res", "61,61"],
    ["--format", "csv", "phase", "--model", "lattice", "--theta=0,4", "--eta=-2,8", "--res", "61,61"],
    ["--format", "pgm", "phase", "--res", "41,41"],
    ["--format", "svg", "phase", "--res", "41,41"],
    ["simulate", "--lambda", "0.3,0.4", "--gens", "12", "--reps", "100", "--alpha", "1.5", "--truncate", "3"],
    ["--format", "csv", "simulate", "--lambda", "0.3,0.4", "--gens", "6", "--reps", "20"],
    ["spine", "--lambda", "0.4,0.7301692821256899", "--steps", "20", "--reps", "5"],
    ["tv", "--alpha", "1.5", "--delta", "1.5", "--check"],
    ["similarity", "--from-complex", "--lambda", "0.3,0.4", "--gens", "5", "--reps", "3"],
]


def _cli(args, threads, tmp_path):
    out = tmp_path / f"out_{threads}_{time.perf_counter_ns()}"
    proc = subprocess.run([sys.executable, "-m", "complexbrw.cli", "--seed", "7", "--threads", str(threads),
                           "--out", str(out), *args], capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    return out.read_bytes()


def test_criterion_12_determinism(tmp_path):
    mismatches = []
    for args in CLI_RUNS:
        a = _cli(args, 1, tmp_path)
        b = _cli(args, 1, tmp_path)
        c = _cli(args, 8, tmp_path)
        if not (a == b == c) or not a:
            mismatches.append(args[args.index(next(x for x in args if not x.startswith("-")))])
    # diagnose reads a trace file written by simulate
    traces = tmp_path / "traces.ndjson"
    traces.write_bytes(_cli(CLI_RUNS[6], 8, tmp_path))
    d = [_cli(["diagnose", "--traces", str(traces), "--p", "1.5", "--tail", "2,4"], t, tmp_path) for t in (1, 1, 8)]
    if not d[0] == d[1] == d[2]:
        mismatches.append("diagnose")
    ok = not mismatches
    record(12, ok, f"{len(CLI_RUNS) + 1} command runs byte-identical across repeats and threads 1/8"
                   if ok else f"mismatch in {mismatches}")
    assert ok
