"""Acceptance criteria 1-12, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest

from latticemax.cli import run
from latticemax.config import ExperimentConfig
from latticemax.ergodic import ShiftSystem, bau_projection_search, transference_check
from latticemax.lattice import BallSpec, count_ball, count_volume_report, enumerate_ball
from latticemax.maxop import (DominationCheck, delta_sup_ratio, domination_torus_side, large_scale_domination_check,
                              maximal_ratio_experiment)
from latticemax.multiplier import (SampleSpec, exp_sum_multiplier_batch, verify_decay_bound, verify_origin_bound,
                                   verify_small_scale_approx)
from latticemax.ncmax import majorant_norm, schatten_norm
from latticemax.torus import (TorusField, ball_multiplier_grid, convolve_ball, dft, heat_semigroup,
                              plancherel_residual)

import oracles
from test_torus import corpus


def test_criterion_01_lattice_exactness(verdict):
    t0 = time.perf_counter()
    bad = []
    for d in range(1, 5):
        for N in range(1, 7):
            for q in ("one", "two", "infinity"):
                ref = oracles.brute_ball(d, N, q)
                spec = BallSpec(d, N, q)
                pts = [tuple(int(v) for v in p) for p in enumerate_ball(spec)]
                if count_ball(spec).count != len(ref) or pts != ref:
                    bad.append((d, N, q))
    dt = time.perf_counter() - t0
    ok = not bad and dt < 10
    verdict(1, ok, f"lattice counts and enumerations exact on 72 cases, mismatches={len(bad)}, {dt:.1f}s < 10s")
    assert ok, bad


def test_criterion_02_multiplier_dp_exactness(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for d in range(1, 4):
        rng = np.random.default_rng(np.random.SeedSequence([2, d]))
        xis = rng.uniform(-0.5, 0.5, size=(100, d))
        for N in range(1, 5):
            pts = np.array(oracles.brute_ball(d, N, "two"), dtype=float)
            ref = np.mean(np.exp(2j * np.pi * (xis @ pts.T)), axis=1)
            got = exp_sum_multiplier_batch(BallSpec(d, N), xis)
            worst = max(worst, float(np.max(np.abs(got - ref))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 30
    verdict(2, ok, f"ball multiplier DP vs brute force, max error {worst:.2e} <= 1e-12, {dt:.1f}s < 30s")
    assert ok


def test_criterion_03_origin_bound(verdict):
    t0 = time.perf_counter()
    violations, total, min_slack = 0, 0, math.inf
    for d in (1, 2, 4, 8):
        for N in (1, 2, 4, 8):
            rep = verify_origin_bound(d, N, SampleSpec(n=63, seed=3))
            total += len(rep.rows)
            violations += len(rep.violations)
            min_slack = min(min_slack, min(r.slack for r in rep.rows))
    dt = time.perf_counter() - t0
    ok = violations == 0 and total >= 1000 and min_slack >= -1e-9 and dt < 120
    verdict(3, ok, f"origin bound on {total} samples, violations={violations}, min slack {min_slack:.3e}, {dt:.1f}s < 120s")
    assert ok


def test_criterion_04_small_scale_bound(verdict):
    t0 = time.perf_counter()
    d, N = 25600, 32
    rep = verify_small_scale_approx(d, N, SampleSpec(n=50, seed=4, strata=("gaussian",)))
    fc = rep.fitted_constants
    dt = time.perf_counter() - t0
    algebraic_ok = fc["algebraic_arm_violations"] == 0 and not rep.violations
    c_ok = fc["c_raw"] > 0
    ok = algebraic_ok and c_ok and dt < 1800
    verdict(4, ok, f"small-scale bound at d={d}, N={N}: algebraic arm violations={int(fc['algebraic_arm_violations'])}, "
                   f"exponential arm holds for every c <= {fc['c_raw']:.3g} (so some c in (0,1)), {dt:.0f}s < 1800s")
    assert ok


def test_criterion_05_decay_bound(verdict):
    t0 = time.perf_counter()
    details, ok = [], True
    for d, N in ((4, 32), (9, 64)):
        a = verify_decay_bound(d, N, SampleSpec(n=100, seed=5, offset=0)).fitted_constants["C"]
        b = verify_decay_bound(d, N, SampleSpec(n=100, seed=5, offset=100)).fitted_constants["C"]
        stable = math.isfinite(a) and math.isfinite(b) and a > 0 and b > 0 and abs(a - b) <= 0.2 * min(a, b)
        ok &= stable
        details.append(f"(d={d},N={N}) C={a:.4g}/{b:.4g}")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    verdict(5, ok, f"decay constant finite and within 20% across draws: {', '.join(details)}, {dt:.1f}s < 300s")
    assert ok


def test_criterion_06_count_volume_ratio(verdict):
    t0 = time.perf_counter()
    rep = count_volume_report(range(1, 7), (1, 2, 4), 1.0)
    ratios = [r.ratio for r in rep.rows]
    hi = 2 * math.exp(1 / 8)
    dt = time.perf_counter() - t0
    ok = len(ratios) == 18 and min(ratios) >= 0.5 and max(ratios) <= hi and dt < 60
    verdict(6, ok, f"count/volume ratios in [{min(ratios):.4f}, {max(ratios):.4f}] within [0.5, {hi:.4f}], {dt:.1f}s < 60s")
    assert ok


def test_criterion_07_torus_analysis(verdict):
    t0 = time.perf_counter()
    worst = {"plancherel": 0.0, "convolution": 0.0, "two_path": 0.0, "law": 0.0, "positivity": 0.0}
    fields = 0
    for f in corpus(100):
        fields += 1
        worst["plancherel"] = max(worst["plancherel"], plancherel_residual(f))
        N = 1 if f.M < 8 else 2
        conv = dft(convolve_ball(f, N)).values
        mult = ball_multiplier_grid(f.M, f.d, N)[(...,) + (None, None)] * dft(f).values
        worst["convolution"] = max(worst["convolution"], float(np.max(np.abs(conv - mult))) / max(1.0, float(np.max(np.abs(mult)))))
        for t in (0.5, 2.0):
            worst["two_path"] = max(worst["two_path"],
                                    heat_semigroup(f, t, "spectral").max_abs_diff(heat_semigroup(f, t, "series")))
        worst["law"] = max(worst["law"],
                           heat_semigroup(heat_semigroup(f, 0.5), 2.0).max_abs_diff(heat_semigroup(f, 2.5)))
        if f.is_positive:
            lo = min(np.linalg.eigvalsh(heat_semigroup(f, 1.0).values).min(),
                     np.linalg.eigvalsh(convolve_ball(f, N).values).min())
            worst["positivity"] = max(worst["positivity"], max(0.0, -float(lo)))
    dt = time.perf_counter() - t0
    limits = {"plancherel": 1e-9, "convolution": 1e-9, "two_path": 1e-8, "law": 1e-8, "positivity": 1e-9}
    ok = fields == 100 and all(worst[k] <= limits[k] for k in limits) and dt < 120
    detail = ", ".join(f"{k} {worst[k]:.1e}<={limits[k]:.0e}" for k in limits)
    verdict(7, ok, f"torus corpus of {fields} fields: {detail}, {dt:.1f}s < 120s")
    assert ok


def test_criterion_08_majorant_norm(verdict):
    t0 = time.perf_counter()
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sz = np.array([[1.0, 0.0], [0.0, -1.0]])
    scalar_ok = majorant_norm([np.array([[-3.0]]), np.array([[2.0]])], 1.5).value == 3.0
    rng = np.random.default_rng(8)
    single_err = 0.0
    for n in (2, 3, 4):
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        x = (a + a.conj().T) / 2
        for p in (1.0, 1.5, 2.0, 3.0, np.inf):
            single_err = max(single_err, abs(majorant_norm([x], p).value / schatten_norm(x, p) - 1))
    pauli = {}
    for p in (1.0, np.inf):
        ref, _ = oracles.grid_majorant_2x2([sx, sz], p)
        pauli[p] = (majorant_norm([sx, sz], p).value, ref)
    pauli_ok = all(abs(v - r) <= 1e-4 * r for v, r in pauli.values())
    pauli_ok &= abs(pauli[1.0][0] - 2) <= 2e-4 and abs(pauli[np.inf][0] - 1) <= 1e-4

    sandwich_bad = homog_bad = 0
    for i in range(500):
        r = np.random.default_rng(np.random.SeedSequence([88, i]))
        n, m = int(r.integers(1, 5)), int(r.integers(1, 9))
        p = float(r.choice([1.0, 1.5, 2.0, 3.0, 4.0, np.inf]))
        xs = []
        for _ in range(m):
            a = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
            xs.append((a + a.conj().T) / 2)
        v = majorant_norm(xs, p).value
        lo = max(schatten_norm(x, p) for x in xs)
        abs_sum = sum(_abs(x) for x in xs)
        hi = schatten_norm(abs_sum, p)
        if not (lo - 1e-6 <= v <= hi + 1e-6):
            sandwich_bad += 1
        c = float(r.choice([-3.0, 0.5, 2.0]))
        if abs(majorant_norm([c * x for x in xs], p).value - abs(c) * v) > 1e-4 * abs(c) * v:
            homog_bad += 1
    dt = time.perf_counter() - t0
    ok = scalar_ok and single_err <= 1e-6 and pauli_ok and sandwich_bad == 0 and homog_bad == 0 and dt < 600
    verdict(8, ok, f"majorant norm: scalar exact={scalar_ok}, single-matrix rel err {single_err:.1e}, "
                   f"Pauli p=1 {pauli[1.0][0]:.6f} (grid {pauli[1.0][1]:.6f}), p=inf {pauli[np.inf][0]:.6f} "
                   f"(grid {pauli[np.inf][1]:.6f}), 500 families: sandwich failures={sandwich_bad}, "
                   f"homogeneity failures={homog_bad}, {dt:.0f}s < 600s")
    assert ok


def _abs(x):
    w, v = np.linalg.eigh(x)
    return (v * np.abs(w)) @ v.conj().T


def test_criterion_09_dimension_trend(verdict):
    t0 = time.perf_counter()
    delta = maximal_ratio_experiment(["delta"], 2.0, range(1, 7), seed=0)
    delta_rows = delta.select("delta", "union")
    closed_ok = all(
        abs(r.ratio - delta_sup_ratio(r.d, [2**k for k in range(int(math.log2(delta.meta["N_max"][f"{r.d}/delta"])) + 1)])) < 1e-9
        for r in delta_rows)
    delta_max = max(r.ratio for r in delta_rows)
    inputs = ["random_scalar", "random", "projector"]
    rand = maximal_ratio_experiment(inputs, 2.0, range(1, 7), seed=0)
    growth = {}
    for name in inputs:
        rows = {r.d: r.ratio for r in rand.select(name, "union")}
        growth[name] = max(rows.values()) / rows[1]
    dt = time.perf_counter() - t0
    ok = len(delta_rows) == 6 and delta_max <= 2 and closed_ok and max(growth.values()) <= 1.5 and dt < 1200
    g = ", ".join(f"{k} {v:.3f}" for k, v in growth.items())
    verdict(9, ok, f"delta union ratio max {delta_max:.4f} <= 2 (closed form match={closed_ok}); "
                   f"random corpus max-over-d / d=1: {g} (<= 1.5), {dt:.0f}s < 1200s")
    assert ok


def test_criterion_10_large_scale_domination(verdict):
    t0 = time.perf_counter()
    chk = DominationCheck(2, 8, mc_samples=10**6, seed=42)
    M = domination_torus_side(2, 8)
    rep = large_scale_domination_check(TorusField.delta(M, 2), chk, C1=1.0)
    dt = time.perf_counter() - t0
    ok = rep.pointwise_ok and rep.volume_ok and dt < 300
    verdict(10, ok, f"domination at d=2, N=8, seed 42, 1e6 samples: {rep.lhs.size} sites, violations="
                    f"{len(rep.violations())}, volume ratio {rep.volume_ratio} <= {rep.volume_bound:.4f}, "
                    f"pooled rel. stderr {rep.pooled_rel_stderr:.2e}, {dt:.1f}s < 300s")
    assert ok


def test_criterion_11_ergodic(verdict):
    t0 = time.perf_counter()
    cases = [(8, 1, 2, [1, 2, 4], 16, 0.5), (8, 1, 1, [1, 2, 4], 16, 0.5),
             (4, 2, 1, [1, 2], 8, 0.6), (4, 2, 2, [1], 6, 0.5)]
    reports = []
    for i in range(20):
        M, d, n, radii, R, eps = cases[i % len(cases)]
        rng = np.random.default_rng(np.random.SeedSequence([11, i]))
        f = TorusField.random(M, d, n, rng, "hermitian")
        p = [2.0, 3.0, 4.0, np.inf][i % 4]
        reports.append(transference_check(ShiftSystem(M, d, n), f, p, radii, R, eps))
    ident = max(r.identity_residual for r in reports)
    trans_ok = all(r.ok for r in reports)
    bau = bau_projection_search([np.diag([1.0 / N, 1.0]) for N in range(1, 33)], np.zeros((2, 2)), 0.6)
    bau_ok = np.allclose(bau.e, np.diag([1.0, 0.0]), atol=1e-12) and bau.trace_deficit == 0.5
    dt = time.perf_counter() - t0
    ok = ident == 0.0 and trans_ok and bau_ok and dt < 300
    worst = max(r.lhs / r.rhs for r in reports)
    verdict(11, ok, f"pure-shift identity residual {ident:.1e}; 20 transference cases hold (max lhs/rhs {worst:.6f}); "
                    f"b.a.u. projection diag(1,0) with deficit {bau.trace_deficit}: {bau_ok}, {dt:.1f}s < 300s")
    assert ok


ACCEPTANCE_RUNS = [
    ("count", {"d": "1,2,3,4", "N": "1,2,3,4,5,6", "q": "one,two,infinity", "volume_d": "1,2,3,4,5,6"}),
    ("multiplier-verify", {"kind": "origin", "d": "8", "N": "8"}),
    ("semigroup-check", {"fields": "5"}),
    ("maximal-experiment", {"d": "1,2,3,4"}),
    ("domination-check", {}),
    ("ergodic-demo", {}),
    ("bau-demo", {}),
]


def test_criterion_12_determinism(tmp_path, verdict):
    differing = []
    files = 0
    for command, params in ACCEPTANCE_RUNS:
        cfg = ExperimentConfig(command, seed=42)
        for k, v in params.items():
            cfg.set(k, v)
        a, b = tmp_path / command / "a", tmp_path / command / "b"
        run(cfg, a)
        run(cfg, b)
        for path in sorted(a.glob("*.csv")):
            files += 1
            if path.read_bytes() != (b / path.name).read_bytes():
                differing.append(f"{command}/{path.name}")
    ok = not differing and files >= len(ACCEPTANCE_RUNS)
    verdict(12, ok, f"{len(ACCEPTANCE_RUNS)} commands rerun with seed 42: {files} CSV files compared, "
                    f"{len(differing)} differ")
    assert ok, differing
