import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma, kv

from conftest import covariance_models
from rfd import (
    IsotropicModel,
    UnboundedDerivative,
    cov_blocks,
    matern_coeffs,
    sqc_eval,
    variogram_eval,
)
from rfd.covariance import double_factorial, variogram_second_derivative

R2_GRID = np.logspace(-3, 1, 9)


def bessel_matern(p, sigma2, s, r):
    """Direct Bessel-form oracle for the Matern covariance at distance r."""
    nu = p + 0.5
    if r == 0:
        return sigma2
    arg = math.sqrt(2 * nu) * r / s
    return sigma2 * 2 ** (1 - nu) / gamma(nu) * arg ** nu * kv(nu, arg)


class TestSqcEval:
    def test_sqexp_at_zero(self):
        model = IsotropicModel.squared_exponential()
        assert sqc_eval(model, 0.0, 0) == 1.0
        assert sqc_eval(model, 0.0, 1) == -0.5

    def test_matern_p2_closed_value(self):
        # e^{-sqrt5} (1 + sqrt5 + 5/3), frozen from the Bessel-form oracle
        model = IsotropicModel.matern(2)
        expected = bessel_matern(2, 1.0, 1.0, 1.0)
        assert expected == pytest.approx(0.5239941088318205, abs=1e-14)
        assert sqc_eval(model, 1.0, 0) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("p", [1, 2])
    @pytest.mark.parametrize("r", [0.1, 0.7, 1.9, 4.2])
    def test_matern_matches_bessel_form(self, p, r):
        model = IsotropicModel.matern(p, variance=1.7, length_scale=0.6)
        expected = bessel_matern(p, 1.7, 0.6, r)
        assert sqc_eval(model, r * r, 0) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("model", covariance_models(),
                             ids=lambda m: m.kind.value + str(m.smoothness))
    def test_finite_differences(self, model):
        for r2 in R2_GRID:
            h = 1e-6 * max(r2, 1.0)
            fd1 = (sqc_eval(model, r2 + h) - sqc_eval(model, r2 - h)) / (2 * h)
            assert fd1 == pytest.approx(sqc_eval(model, r2, 1), rel=1e-6)
            fd2 = (sqc_eval(model, r2 + h, 1)
                   - sqc_eval(model, r2 - h, 1)) / (2 * h)
            assert fd2 == pytest.approx(sqc_eval(model, r2, 2), rel=1e-5)

    def test_negative_r2_rejected(self):
        with pytest.raises(ValueError):
            sqc_eval(IsotropicModel.squared_exponential(), -1.0)

    def test_variogram_kind_rejected(self):
        with pytest.raises(ValueError):
            sqc_eval(IsotropicModel.grq_variogram(1.0), 1.0)

    def test_matern_p1_second_derivative_unbounded_at_zero(self):
        model = IsotropicModel.matern(1)
        with pytest.raises(UnboundedDerivative):
            sqc_eval(model, 0.0, 2)
        assert math.isfinite(sqc_eval(model, 1e-8, 2))

    def test_rq_converges_to_sqexp(self):
        rq = IsotropicModel.rational_quadratic(1e4)
        se = IsotropicModel.squared_exponential()
        for r2 in np.linspace(0.0, 10.0, 21):
            assert abs(sqc_eval(rq, r2) - sqc_eval(se, r2)) <= 1e-3


class TestMaternCoefficients:
    def test_p1(self):
        mc = matern_coeffs(1)
        assert mc.c == (1, 1)
        assert mc.d == (1,)

    def test_p2(self):
        mc = matern_coeffs(2)
        assert mc.c == (1, 1, Fraction(1, 3))
        assert mc.d == (Fraction(1, 3), Fraction(1, 3))

    @pytest.mark.parametrize("p", range(1, 9))
    def test_endpoints(self, p):
        mc = matern_coeffs(p)
        assert mc.c[0] == 1
        assert mc.c[p] == Fraction(1, double_factorial(2 * p - 1))

    @pytest.mark.parametrize("p", range(2, 9))
    def test_derivative_identity_exact(self, p):
        mc = matern_coeffs(p)
        prev = matern_coeffs(p - 1)
        for k in range(p - 1):
            assert mc.d[k] * (2 * p - 1) == prev.c[k]
        assert mc.d[p - 1] == mc.c[p]

    def test_p0_unsupported(self):
        with pytest.raises(ValueError):
            matern_coeffs(0)

    def test_model_restricted_to_closed_form_p(self):
        with pytest.raises(ValueError):
            IsotropicModel.matern(3)


class TestVariogram:
    @pytest.mark.parametrize("model", covariance_models()
                             + [IsotropicModel.grq_variogram(0.5)],
                             ids=lambda m: m.kind.value + str(m.smoothness))
    def test_zero_at_origin(self, model):
        assert variogram_eval(model, 0.0, 0) == 0.0

    def test_grq_log_branch_normalization(self):
        model = IsotropicModel.grq_variogram(0.0)
        assert variogram_eval(model, 1.0, 0) == pytest.approx(1.0, abs=1e-15)

    def test_grq_derivative_at_zero(self):
        # phi'(0) = (-beta/2) / (2^{-beta/2} - 1) at beta = -1
        model = IsotropicModel.grq_variogram(-1.0)
        expected = 0.5 / (math.sqrt(2.0) - 1.0)
        assert variogram_eval(model, 0.0, 1) == pytest.approx(expected,
                                                              rel=1e-12)

    def test_grq_normalized_at_one(self):
        for beta in [-1.5, -0.5, 0.5, 2.0, 7.0]:
            model = IsotropicModel.grq_variogram(beta)
            assert variogram_eval(model, 1.0, 0) == pytest.approx(1.0,
                                                                  rel=1e-12)

    @pytest.mark.parametrize("model", covariance_models(),
                             ids=lambda m: m.kind.value + str(m.smoothness))
    def test_nonnegative_nondecreasing(self, model):
        values = [variogram_eval(model, r2, 0)
                  for r2 in np.linspace(0.0, 20.0, 60)]
        assert all(v >= 0 for v in values)
        assert all(b >= a - 1e-15 for a, b in zip(values, values[1:]))

    def test_grq_second_derivative_fd(self):
        for beta in [-0.5, 0.0, 1.5]:
            model = IsotropicModel.grq_variogram(beta)
            h = 1e-6
            fd = (variogram_eval(model, 1.0 + h, 1)
                  - variogram_eval(model, 1.0 - h, 1)) / (2 * h)
            assert variogram_second_derivative(model, 1.0) == pytest.approx(
                fd, rel=1e-6)


class TestCovBlocks:
    def test_coincident_points(self):
        model = IsotropicModel.squared_exponential()
        b = cov_blocks(model, np.zeros(2), np.zeros(2))
        assert b.vv == 1.0
        np.testing.assert_array_equal(b.gv, np.zeros(2))
        np.testing.assert_allclose(b.gg, np.eye(2), atol=1e-15)
        assert np.all(np.linalg.eigvalsh(b.gg) > 0)

    def test_unit_displacement_values(self):
        model = IsotropicModel.squared_exponential()
        b = cov_blocks(model, np.array([1.0, 0.0]), np.array([0.0, 0.0]))
        e = math.exp(-0.5)
        assert b.vv == pytest.approx(e, rel=1e-15)
        np.testing.assert_allclose(b.gv, [-e, 0.0], atol=1e-15)
        np.testing.assert_allclose(b.gg, np.diag([0.0, e]), atol=1e-12)

    def test_entries_match_finite_differences_of_vv(self):
        model = IsotropicModel.matern(2, variance=0.9, length_scale=1.3)
        x = np.array([0.4, -0.2, 0.1])
        y = np.array([-0.3, 0.5, 0.6])
        h = 1e-5

        def vv(xx, yy):
            return cov_blocks(model, xx, yy).vv

        b = cov_blocks(model, x, y)
        for i in range(3):
            ei = np.eye(3)[i]
            fd = (vv(x + h * ei, y) - vv(x - h * ei, y)) / (2 * h)
            assert b.gv[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)
            for j in range(3):
                ej = np.eye(3)[j]
                fd2 = (vv(x + h * ei, y + h * ej) - vv(x + h * ei, y - h * ej)
                       - vv(x - h * ei, y + h * ej)
                       + vv(x - h * ei, y - h * ej)) / (4 * h * h)
                assert b.gg[i, j] == pytest.approx(fd2, rel=1e-4, abs=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=4),
           st.lists(st.floats(-3, 3), min_size=2, max_size=4))
    def test_swap_symmetry(self, xs, ys):
        n = min(len(xs), len(ys))
        x, y = np.array(xs[:n]), np.array(ys[:n])
        model = IsotropicModel.squared_exponential(1.2, 0.9)
        b1 = cov_blocks(model, x, y)
        b2 = cov_blocks(model, y, x)
        assert b1.vv == b2.vv
        np.testing.assert_array_equal(b1.gv, -b2.gv)
        np.testing.assert_allclose(b1.gg, b2.gg.T, rtol=1e-14)

    def test_dimension_mismatch(self):
        model = IsotropicModel.squared_exponential()
        with pytest.raises(ValueError):
            cov_blocks(model, np.zeros(2), np.zeros(3))


class TestModelValidation:
    def test_positive_parameters_required(self):
        with pytest.raises(ValueError):
            IsotropicModel.squared_exponential(variance=-1.0)
        with pytest.raises(ValueError):
            IsotropicModel.squared_exponential(length_scale=0.0)
        with pytest.raises(ValueError):
            IsotropicModel.rational_quadratic(beta=-0.5)

    def test_grq_flagging(self):
        assert IsotropicModel.grq_variogram(0.5).has_finite_step
        assert not IsotropicModel.grq_variogram(-1.0).has_finite_step
        assert not IsotropicModel.grq_variogram(-1.5).has_finite_step
        with pytest.raises(ValueError):
            IsotropicModel.grq_variogram(-2.5)
