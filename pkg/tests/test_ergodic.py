import json
import math

import numpy as np
import pytest

from latticemax.errors import EmbeddingError, ShapeMismatchError
from latticemax.ergodic import (TRANSFERENCE_COLUMNS, ShiftSystem, apply_action, bau_projection_search,
                                coboundary_bound, ergodic_average, fixed_point_expectation, transference_check,
                                transference_csv, transference_slack)
from latticemax.ncmax import field_lp_norm
from latticemax.torus import TorusField, convolve_ball

import oracles


def twisted(M=4):
    return ShiftSystem(M, 1, 2, (np.diag([1, 1j]),))


def test_action_examples():
    sys = ShiftSystem(8, 1)
    f = TorusField.delta(8, 1)
    assert apply_action(sys, [0], f).max_abs_diff(f) == 0
    moved = apply_action(sys, [1], f).scalar
    assert moved[7] == 1 and np.count_nonzero(moved) == 1
    with pytest.raises(ShapeMismatchError):
        apply_action(sys, [1], TorusField.delta(4, 1))
    with pytest.raises(ShapeMismatchError):
        apply_action(sys, [1, 2], f)


def test_group_law_and_trace_preservation():
    rng = np.random.default_rng(0)
    systems = [ShiftSystem(4, 2, 2), ShiftSystem.diagonal_twist(4, [[0, 1], [2, 3]]), twisted()]
    for i in range(100):
        sys = systems[i % 3]
        f = TorusField.random(sys.M, sys.d, sys.n, rng, "general")
        v, w = rng.integers(-9, 9, size=(2, sys.d))
        lhs = apply_action(sys, v, apply_action(sys, w, f))
        assert lhs.max_abs_diff(apply_action(sys, v + w, f)) < 1e-10
        for p in (1.0, 2.0, np.inf):
            assert abs(field_lp_norm(apply_action(sys, v, f), p) - field_lp_norm(f, p)) < 1e-10


def test_twist_validation():
    with pytest.raises(ValueError):
        ShiftSystem(4, 1, 2, (np.array([[1, 1], [0, 1]]),))
    with pytest.raises(ValueError):
        ShiftSystem(4, 1, 2, (np.diag([1, np.exp(2j * np.pi / 3)]),))
    rot = np.array([[0, -1], [1, 0]], dtype=complex)
    with pytest.raises(ValueError):
        ShiftSystem(4, 2, 2, (rot, np.diag([1, -1])))
    with pytest.raises(ShapeMismatchError):
        ShiftSystem(4, 2, 2, (np.eye(2),))


def test_pure_shift_average_is_ball_convolution():
    rng = np.random.default_rng(1)
    for M, d, N in [(8, 1, 3), (16, 2, 3), (8, 3, 2), (4, 2, 5)]:
        sys = ShiftSystem(M, d, 2)
        f = TorusField.random(M, d, 2, rng, "general")
        wrap = 2 * math.floor(N) + 1 > M
        ref = convolve_ball(f, N, "spatial", wrap=wrap)
        assert np.array_equal(ergodic_average(sys, f, N).values, ref.values)
        assert ergodic_average(sys, f, N).max_abs_diff(convolve_ball(f, N, "spectral", wrap=wrap)) < 1e-12


def test_constant_field_fixed():
    c = TorusField.constant(8, 2, np.array([[1.0, 2j], [-2j, 0.5]]))
    sys = ShiftSystem(8, 2, 2)
    assert ergodic_average(sys, c, 3).max_abs_diff(c) < 1e-14
    assert fixed_point_expectation(sys, c).max_abs_diff(c) < 1e-14


def test_pure_shift_expectation_is_mean():
    f = TorusField.random(4, 2, 2, np.random.default_rng(2), "general")
    F = fixed_point_expectation(ShiftSystem(4, 2, 2), f)
    assert np.allclose(F.values, f.values.mean(axis=(0, 1)), atol=1e-14)


def test_twisted_expectation_against_character_oracle():
    M = 4
    sys = twisted(M)
    f = TorusField.random(M, 1, 2, np.random.default_rng(3), "general")
    u = np.array([1, 1j])
    ref = np.zeros_like(f.values)
    for x in range(M):
        for k in range(2):
            for l in range(2):
                chi = u[k] * np.conj(u[l])
                ref[x, k, l] = sum(chi**v * f.values[(x + v) % M, k, l] for v in range(M)) / M
    F = fixed_point_expectation(sys, f)
    assert np.max(np.abs(F.values - ref)) < 1e-12
    assert fixed_point_expectation(sys, F).max_abs_diff(F) < 1e-10


def test_expectation_properties():
    rng = np.random.default_rng(4)
    for sys in (ShiftSystem(4, 2, 2), ShiftSystem.diagonal_twist(4, [[0, 1], [3, 2]])):
        f = TorusField.random(4, 2, 2, rng, "positive")
        F = fixed_point_expectation(sys, f)
        assert fixed_point_expectation(sys, F).max_abs_diff(F) < 1e-10
        assert np.linalg.eigvalsh(F.values).min() >= -1e-12
        for v in ([1, 0], [2, 3]):
            assert apply_action(sys, v, F).max_abs_diff(F) < 1e-10
        for N in (1, 2, 5):
            A = ergodic_average(sys, f, N)
            assert fixed_point_expectation(sys, A).max_abs_diff(F) < 1e-9
            assert ergodic_average(sys, F, N).max_abs_diff(F) < 1e-9


def test_convergence_below_frozen_threshold(frozen):
    rng = np.random.default_rng(5)
    for M in (8, 16, 32):
        theta = frozen["wrapped_average_bound"][str(M)]
        assert theta == pytest.approx(oracles.wrapped_average_bound(M, 2, 4 * M), rel=1e-12)
        sys = ShiftSystem(M, 2, 2)
        f = TorusField.random(M, 2, 2, rng, "hermitian")
        sup_f = np.max(np.linalg.norm(f.values, ord=2, axis=(-2, -1)))
        diff = ergodic_average(sys, f, 4 * M).values - fixed_point_expectation(sys, f).values
        assert np.max(np.linalg.norm(diff, ord=2, axis=(-2, -1))) <= theta * sup_f + 1e-12


def test_coboundary_inputs_decay():
    rng = np.random.default_rng(6)
    sys = ShiftSystem(64, 1, 2)
    h = TorusField.random(64, 1, 2, rng, "hermitian")
    g = h - apply_action(sys, [3], h)
    sup_h = np.max(np.linalg.norm(h.values, ord=2, axis=(-2, -1)))
    prev = np.inf
    for N in (4, 8, 16):
        got = np.max(np.linalg.norm(ergodic_average(sys, g, N).values, ord=2, axis=(-2, -1)))
        bound = coboundary_bound(1, N, [3])
        assert got <= bound * sup_h + 1e-12
        assert bound < prev
        prev = bound
    assert coboundary_bound(1, 4, [3]) == pytest.approx(6 / 9)


def test_slack_example():
    assert transference_slack(2, 64, 0.1, 2) == pytest.approx(0.0578125, abs=1e-12)
    assert transference_slack(2, 64, 0.1, np.inf) == 0


def test_transference_cases():
    rng = np.random.default_rng(7)
    reports = []
    for k in range(4):
        sys = ShiftSystem(8, 1, 2)
        f = TorusField.random(8, 1, 2, rng, "hermitian")
        rep = transference_check(sys, f, [2.0, 4.0][k % 2], [1, 2, 4], R=16, eps=0.5)
        assert rep.identity_residual == 0
        assert rep.ok, (rep.lhs, rep.rhs)
        reports.append(rep)
    text = transference_csv(reports)
    assert text.splitlines()[0] == ",".join(TRANSFERENCE_COLUMNS)
    assert len(text.splitlines()) == 5


def test_transference_errors():
    f = TorusField.random(8, 1, 1, np.random.default_rng(0), "hermitian")
    with pytest.raises(EmbeddingError):
        transference_check(ShiftSystem(8, 1), f, 2.0, [1, 8], R=16, eps=0.5)
    with pytest.raises(ValueError):
        transference_check(twisted(8), TorusField.random(8, 1, 2, np.random.default_rng(0), "hermitian"),
                           2.0, [1], R=16, eps=0.5)


def test_bau_closed_form_example():
    seq = [np.diag([1 / N, 1.0]) for N in range(1, 33)]
    rep = bau_projection_search(seq, np.zeros((2, 2)), 0.6)
    assert np.allclose(rep.e, np.diag([1.0, 0.0]), atol=1e-12)
    assert rep.trace_deficit == 0.5 and rep.converged
    assert rep.residuals == pytest.approx([1 / N for N in range(1, 33)])
    assert np.max(np.abs(rep.e @ rep.e - rep.e)) < 1e-10
    back = json.loads(rep.to_json())
    assert back["trace_deficit"] == 0.5 and back["shape"] == [2, 2]


def test_bau_uniform_and_zero_sequences():
    rep = bau_projection_search([np.eye(2) / N for N in range(1, 33)], np.zeros((2, 2)), 0.6)
    assert np.allclose(rep.e, np.eye(2)) and rep.trace_deficit == 0 and rep.converged
    rep = bau_projection_search([np.zeros((3, 3))] * 8, np.zeros((3, 3)), 0.3)
    assert np.allclose(rep.e, np.eye(3)) and all(r == 0 for r in rep.residuals)
    with pytest.raises(ValueError):
        bau_projection_search([np.eye(2)], np.zeros((2, 2)), 1.0)


def test_bau_on_ergodic_averages():
    sys = ShiftSystem(8, 1, 2)
    f = TorusField.random(8, 1, 2, np.random.default_rng(8), "hermitian")
    F = fixed_point_expectation(sys, f)
    seq = [ergodic_average(sys, f, N) for N in range(1, 25)]
    rep = bau_projection_search(seq, F, 0.5)
    assert rep.trace_deficit < 0.5
    assert all(np.isfinite(rep.residuals))
    assert rep.e.shape == f.values.shape
