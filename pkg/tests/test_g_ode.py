# tests/test_g_ode.py - Closed-form g-ODE solutions against exact formulas and a stepwise reference
import math

import numpy as np
import pytest

from core.derivator import default_grid, identity_with_jumps
from core.errors import DomainError, GridError, IntervalError, RegressivityError
from core.g_ode import (
    GFunctionSample, LinearGODE, exponential_log, g_exponential, jump_update, log_coefficient,
    regressive_coefficients, residual, solve_linear, solve_stepwise,
)

TOL = 1e-12


@pytest.fixture
def one_jump():
    return identity_with_jumps([(1.0, 0.25)], 3.0)


class TestCoefficients:
    def test_regressive_coefficients_at_jump(self, one_jump):
        assert regressive_coefficients(2.0, one_jump, 1.0) == pytest.approx((4.0, 2.0))

    def test_regressive_coefficients_off_jumps(self, one_jump):
        assert regressive_coefficients(2.0, one_jump, 0.5) == (2.0, 1.0)

    def test_log_coefficient(self, one_jump):
        assert log_coefficient(2.0, one_jump, 1.0) == pytest.approx(4.0 * math.log(2.0))
        assert log_coefficient(lambda t: 3.0 * t, one_jump, 0.5) == 1.5

    def test_singular_jump(self, one_jump):
        with pytest.raises(RegressivityError) as info:
            regressive_coefficients(4.0, one_jump, 1.0)
        assert info.value.time == 1.0
        assert info.value.delta == 0.25


class TestExponential:
    def test_identity(self, identity):
        assert g_exponential(2.0, identity, 1.0) == pytest.approx(math.exp(2.0), rel=TOL)

    def test_sign_flip_across_jump(self):
        d = identity_with_jumps([(1.0, 1.0)], 3.0)
        before = g_exponential(2.0, d, 1.0)
        after = g_exponential(2.0, d, 1.0, right=True)
        assert after / before == pytest.approx(-1.0, abs=TOL)

    def test_log_form_survives_overflow(self, identity):
        log_mag, sign = exponential_log(500.0, identity, 10.0)
        assert log_mag == pytest.approx(5000.0)
        assert sign == 1.0
        assert g_exponential(500.0, identity, 10.0) == math.inf

    def test_dead_time_adds_nothing(self, silkworm):
        log_a, _ = exponential_log(0.7, silkworm, 2.0)
        log_b, _ = exponential_log(0.7, silkworm, 3.0)
        assert log_a == log_b


class TestSolveLinear:
    def test_classical_decay(self, identity):
        ode = LinearGODE(1.5, x0=2.0, window=(0.0, 1.0))
        sol = solve_linear(ode, identity)
        np.testing.assert_allclose(sol.left_values, 2.0 * np.exp(-1.5 * sol.grid), rtol=TOL, atol=TOL)

    def test_constant_forcing(self, identity):
        ode = LinearGODE(1.0, forcing=1.0, x0=0.0, window=(0.0, 1.0))
        sol = solve_linear(ode, identity, grid=np.linspace(0.0, 1.0, 11))
        np.testing.assert_allclose(sol.left_values, 1.0 - np.exp(-sol.grid), atol=1e-9)

    def test_callable_lambda(self, identity):
        ode = LinearGODE(lambda t: 1.0 + t, x0=1.0, window=(0.0, 1.0))
        sol = solve_linear(ode, identity, grid=np.linspace(0.0, 1.0, 5))
        assert sol.left_values[-1] == pytest.approx(math.exp(-1.5), abs=1e-9)

    def test_jump_relation_is_exact(self):
        d = identity_with_jumps([(0.5, 0.3), (1.2, 0.7)], 2.0)
        ode = LinearGODE(2.0, forcing=0.4, x0=1.0, window=(0.0, 2.0))
        sol = solve_linear(ode, d, grid=default_grid(d, 0.0, 2.0, 8))
        assert sol.jump_times() == [0.5, 1.2]
        for index, t in enumerate(sol.grid):
            delta = d.delta(float(t))
            if delta > 0.0:
                expected = jump_update(sol.left_values[index], 2.0, 0.4, delta)
                assert abs(sol.right_value(index) - expected) <= 1e-14

    def test_dead_time_freezes_solution(self, silkworm):
        grid = np.union1d(default_grid(silkworm, 0.0, 10.0, 20), [2.25, 2.5, 2.75, 4.25, 4.5, 4.75])
        sol = solve_linear(LinearGODE(2.0, x0=1.0, window=(0.0, 10.0)), silkworm, grid=grid)
        at = {float(t): i for i, t in enumerate(sol.grid)}
        frozen = sol.left_values[at[2.0]]
        for t in (2.25, 2.5, 2.75, 3.0):
            assert sol.left_values[at[t]] == frozen
        after_death = sol.right_value(at[4.0])
        assert after_death == pytest.approx(-sol.left_values[at[4.0]], abs=1e-14)
        for t in (4.25, 4.5, 4.75, 5.0):
            assert sol.left_values[at[t]] == after_death

    def test_start_after_jump_skips_singular_atom(self, silkworm):
        ode = LinearGODE(1.0, x0=3.0, window=(5.0, 9.0), x0_after_jump=True)
        sol = solve_linear(ode, silkworm)
        assert sol.value_at(7.0) == pytest.approx(3.0 * math.exp(-1.0), abs=TOL)
        assert 0 not in sol.right_values

    def test_singular_atom_raises(self, silkworm):
        with pytest.raises(RegressivityError) as info:
            solve_linear(LinearGODE(1.0, x0=1.0, window=(0.0, 10.0)), silkworm, mode=3)
        assert info.value.time == 4.0
        assert info.value.mode == 3

    def test_value_between_grid_points(self, identity):
        ode = LinearGODE(0.8, x0=1.0, window=(0.0, 2.0))
        sol = solve_linear(ode, identity, grid=[0.0, 1.0, 2.0])
        assert sol.value_at(0.37) == pytest.approx(math.exp(-0.8 * 0.37), rel=TOL)
        np.testing.assert_allclose(sol.values_at([0.5, 1.5]), np.exp(-0.8 * np.array([0.5, 1.5])), rtol=TOL)

    def test_value_outside_window(self, identity):
        sol = solve_linear(LinearGODE(1.0, x0=1.0, window=(0.0, 1.0)), identity)
        with pytest.raises(DomainError):
            sol.value_at(1.5)


class TestGridValidation:
    def test_missing_jump(self):
        d = identity_with_jumps([(0.5, 0.3)], 1.0)
        with pytest.raises(GridError):
            solve_linear(LinearGODE(1.0, x0=1.0, window=(0.0, 1.0)), d, grid=[0.0, 0.2, 1.0])

    def test_wrong_endpoints(self, identity):
        with pytest.raises(GridError):
            solve_linear(LinearGODE(1.0, x0=1.0, window=(0.0, 1.0)), identity, grid=[0.0, 0.5, 0.9])

    def test_not_increasing(self, identity):
        with pytest.raises(GridError):
            solve_linear(LinearGODE(1.0, x0=1.0, window=(0.0, 1.0)), identity, grid=[0.0, 0.6, 0.5, 1.0])

    def test_empty_window(self):
        with pytest.raises(IntervalError):
            LinearGODE(1.0, window=(1.0, 1.0))


class TestResidual:
    def test_forced_problem_with_jumps(self):
        d = identity_with_jumps([(0.5, 0.3), (1.2, 0.7)], 2.0)
        ode = LinearGODE(2.0, forcing=0.4, x0=1.0, window=(0.0, 2.0))
        sol = solve_linear(ode, d, grid=default_grid(d, 0.0, 2.0, 6))
        assert residual(ode, d, sol) < 1e-8

    def test_silkworm_homogeneous(self, silkworm):
        ode = LinearGODE(0.7, x0=1.0, window=(0.0, 12.0))
        sol = solve_linear(ode, silkworm, grid=default_grid(silkworm, 0.0, 12.0, 10))
        assert residual(ode, silkworm, sol) < 1e-8

    def test_start_after_jump(self, silkworm):
        ode = LinearGODE(1.0, x0=2.0, window=(5.0, 9.0), x0_after_jump=True)
        sol = solve_linear(ode, silkworm, grid=default_grid(silkworm, 5.0, 9.0, 10))
        assert residual(ode, silkworm, sol) < 1e-8

    def test_shifted_solution_is_rejected(self, identity):
        ode = LinearGODE(1.0, x0=1.0, window=(0.0, 1.0))
        sol = solve_linear(ode, identity, grid=np.linspace(0.0, 1.0, 11))
        shifted = GFunctionSample(sol.grid, sol.left_values + 0.1, identity)
        assert residual(ode, identity, shifted) >= 0.09


def _random_ode(rng):
    """Random jump derivator on [0, 2] with a regressive lambda and optional forcing"""
    while True:
        count = int(rng.integers(0, 6))
        times = np.sort(rng.choice(np.arange(1, 40), size=count, replace=False)) * 0.05
        jumps = [(float(t), float(rng.uniform(0.05, 1.0))) for t in times]
        lam0 = float(rng.uniform(0.1, 10.0))
        if rng.random() < 0.25:
            phase = float(rng.uniform(0.0, math.pi))

            def lam(t, lam0=lam0, phase=phase):
                return lam0 * (1.0 + 0.5 * math.sin(t + phase))
        else:
            lam = lam0
        lam_fn = lam if callable(lam) else (lambda t, lam0=lam0: lam0)
        if all(abs(1.0 - lam_fn(t) * delta) > 0.05 for t, delta in jumps):
            break
    forcing = float(rng.uniform(-1.0, 1.0)) if rng.random() < 0.5 else None
    d = identity_with_jumps(jumps, 2.0)
    ode = LinearGODE(lam, forcing=forcing, x0=float(rng.uniform(-2.0, 2.0)), window=(0.0, 2.0))
    return d, ode


def test_matches_stepwise_reference_on_random_problems(rng):
    for _ in range(100):
        d, ode = _random_ode(rng)
        grid = default_grid(d, 0.0, 2.0, 3)
        closed = solve_linear(ode, d, grid=grid)
        stepwise = solve_stepwise(ode, d, grid=grid)
        scale = max(1.0, float(np.max(np.abs(stepwise.left_values))))
        assert np.max(np.abs(closed.left_values - stepwise.left_values)) <= 1e-9 * scale
        for index in stepwise.right_values:
            assert closed.right_value(index) == pytest.approx(stepwise.right_value(index), abs=1e-9 * scale)
