# tests/test_stieltjes_integral.py - Stieltjes quadrature, cumulative integrals and L^p_g norms
import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

from core.derivator import identity_with_jumps
from core.errors import IntervalError, QuadratureError
from core.stieltjes_integral import (
    Integrand, cumulative, integrate, integrate_classical, integrate_continuous,
    integrate_vector, lp_norm,
)

TOL = 1e-10


def one(s):
    return 1.0


class TestIntegrate:
    def test_silkworm_total_mass(self, silkworm):
        assert integrate(silkworm, one, 0.0, 5.0) == pytest.approx(3.0, abs=TOL)

    def test_identity_linear(self, identity):
        assert integrate(identity, lambda s: s, 0.0, 1.0) == pytest.approx(0.5, abs=TOL)

    def test_pure_jump(self, step):
        assert integrate(step, lambda s: 5.0, 0.0, 2.0) == pytest.approx(10.0, abs=TOL)

    def test_jump_at_right_end_excluded(self, silkworm):
        assert integrate(silkworm, one, 0.0, 4.0) == pytest.approx(2.0, abs=TOL)

    def test_constancy_contributes_nothing(self, silkworm):
        assert integrate(silkworm, lambda s: 1e6, 2.0, 3.0) == 0.0

    def test_empty_interval(self, silkworm):
        assert integrate(silkworm, one, 3.5, 3.5) == 0.0

    def test_vector_integrand(self, silkworm):
        result = integrate_vector(silkworm, lambda s: np.array([1.0, s]), 0.0, 5.0)
        # s-moment: (2 - pi/2) + (3 + pi/4) on the smooth branches plus 4 * 1 at the jump
        np.testing.assert_allclose(result, [3.0, 9.0 - math.pi / 4.0], atol=1e-9)

    def test_vectorized_integrand(self, silkworm):
        f = Integrand(lambda t: np.exp(-t), vectorized=True)
        expected = integrate(silkworm, lambda s: math.exp(-s), 0.0, 12.0)
        assert integrate(silkworm, f, 0.0, 12.0) == pytest.approx(expected, abs=TOL)

    def test_against_scipy_with_jumps(self):
        jumps = [(0.4, 0.25), (1.1, 0.5), (1.7, 1.5)]
        d = identity_with_jumps(jumps, 2.0)
        smooth, _ = sp_integrate.quad(math.exp, 0.0, 2.0, epsabs=1e-14, epsrel=1e-14)
        expected = smooth + sum(math.exp(t) * delta for t, delta in jumps)
        assert integrate(d, math.exp, 0.0, 2.0) == pytest.approx(expected, abs=1e-9)

    def test_known_discontinuity(self, identity):
        f = Integrand(lambda s: 0.0 if s < 0.3 else 1.0, known_discontinuities=(0.3,))
        assert integrate(identity, f, 0.0, 1.0) == pytest.approx(0.7, abs=TOL)

    def test_continuous_part_drops_atoms(self, silkworm):
        result = integrate_continuous(silkworm, one, 0.0, 10.0)
        assert float(result) == pytest.approx(4.0, abs=TOL)


class TestDifferentiation:
    def test_difference_quotient_on_smooth_branch(self, silkworm):
        h = 1e-6
        for t in np.linspace(0.05, 1.95, 50):
            num = integrate(silkworm, math.cos, t, t + h)
            den = silkworm.eval(t + h) - silkworm.eval(t)
            assert num / den == pytest.approx(math.cos(t), abs=1e-4)

    def test_jump_quotient_is_exact(self, silkworm):
        num = integrate(silkworm, math.cos, 4.0, 4.5)
        assert num / silkworm.delta(4.0) == pytest.approx(math.cos(4.0), abs=1e-14)


class TestErrors:
    def test_non_finite_integrand(self, identity):
        with pytest.raises(QuadratureError):
            integrate(identity, lambda s: math.inf, 0.0, 1.0)

    @pytest.mark.parametrize("tol", [0.0, -1e-8, math.nan])
    def test_bad_tolerance(self, identity, tol):
        with pytest.raises(QuadratureError):
            integrate(identity, one, 0.0, 1.0, tol=tol)

    def test_inverted_interval(self, identity):
        with pytest.raises(IntervalError):
            integrate(identity, one, 1.0, 0.5)

    def test_inconsistent_vector_length(self, identity):
        with pytest.raises(QuadratureError):
            integrate_vector(identity, lambda s: np.ones(2) if s < 0.5 else np.ones(3), 0.0, 1.0)

    def test_vector_through_scalar_api(self, identity):
        with pytest.raises(QuadratureError):
            integrate(identity, lambda s: np.array([s, s]), 0.0, 1.0)


class TestClassical:
    def test_memory_integral_against_scipy(self, silkworm):
        def f(s):
            return math.exp(-silkworm.eval(s))

        expected, _ = sp_integrate.quad(f, 0.0, 4.0, points=[2.0, 3.0], epsabs=1e-13, epsrel=1e-13, limit=200)
        result = integrate_classical(f, 0.0, 4.0, derivator=silkworm)
        assert float(result) == pytest.approx(expected, abs=1e-8)

    def test_without_derivator(self):
        assert float(integrate_classical(math.exp, 0.0, 1.0)) == pytest.approx(math.e - 1.0, abs=TOL)


class TestCumulative:
    def test_silkworm_staircase(self, silkworm):
        result = cumulative(silkworm, one, [0.0, 2.0, 3.0, 5.0])
        np.testing.assert_allclose(result.values, [0.0, 1.0, 1.0, 3.0], atol=TOL)
        assert result.values[-1] == pytest.approx(3.0, abs=TOL)

    def test_zero_integrand(self, silkworm):
        result = cumulative(silkworm, lambda s: 0.0, np.linspace(0.0, 10.0, 7))
        assert np.all(result.values == 0.0)

    def test_identity(self, identity):
        result = cumulative(identity, one, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(result.values, [0.0, 1.0, 2.0], atol=TOL)

    def test_matches_direct_integral(self, silkworm):
        grid = np.linspace(0.0, 12.0, 25)
        result = cumulative(silkworm, math.sin, grid)
        assert result.values[-1] == pytest.approx(integrate(silkworm, math.sin, 0.0, 12.0), abs=1e-9)


class TestNorms:
    def test_l2_of_constant(self, silkworm):
        assert lp_norm(silkworm, lambda s: 2.0, 2, 0.0, 5.0) == pytest.approx(2.0 * math.sqrt(3.0), abs=TOL)

    def test_sup_norm(self, silkworm):
        assert lp_norm(silkworm, lambda s: -3.5, math.inf, 0.0, 5.0) == 3.5

    def test_l1_identity(self, identity):
        assert lp_norm(identity, lambda s: s, 1, 0.0, 1.0) == pytest.approx(0.5, abs=TOL)

    def test_vector_values_use_euclidean_norm(self, identity):
        assert lp_norm(identity, lambda s: np.array([3.0, 4.0]), 2, 0.0, 1.0) == pytest.approx(5.0, abs=TOL)

    def test_p_below_one(self, identity):
        with pytest.raises(QuadratureError):
            lp_norm(identity, one, 0.5, 0.0, 1.0)
