import math

import numpy as np
import pytest

from rfd import (
    IsotropicModel,
    NoFiniteStep,
    NoiseSpec,
    StationarySample,
    closed_form_step,
    compute_xi,
    conditional_variance,
    conservative_step,
    gradient_only_step,
    numeric_step,
    regularized_gradient,
    regularized_step,
    step_objective,
)

XI_FACTORS = [0.0, -0.1, -1.0, -10.0]
SCALES = [0.05, 1.0, 3.0]


def family(s):
    return [
        IsotropicModel.squared_exponential(length_scale=s),
        IsotropicModel.matern(1, length_scale=s),
        IsotropicModel.matern(2, length_scale=s),
        IsotropicModel.rational_quadratic(2.0, length_scale=s),
    ]


class TestComputeXi:
    def test_noiseless_factor_is_one(self):
        model = IsotropicModel.squared_exponential()
        xi = compute_xi(model, loss=-1.0, mu=0.0, grad_norm=2.0,
                        noise=NoiseSpec())
        assert xi == -0.5

    def test_value_noise_shrinks_xi(self):
        # C(0)=1, value noise 1 halves the weight; zero gradient noise
        model = IsotropicModel.squared_exponential()
        xi = compute_xi(model, loss=-1.0, mu=0.0, grad_norm=1.0,
                        noise=NoiseSpec(value_var=1.0, grad_var=0.0))
        assert xi == pytest.approx(-0.5, rel=1e-15)

    def test_loss_at_mean_gives_zero(self):
        model = IsotropicModel.matern(2)
        for noise in [NoiseSpec(), NoiseSpec(2.0, 3.0)]:
            assert compute_xi(model, 1.3, 1.3, 0.7, noise) == 0.0

    def test_zero_gradient_signals_stationary(self):
        model = IsotropicModel.squared_exponential()
        with pytest.raises(StationarySample):
            compute_xi(model, 0.0, 0.0, 0.0, NoiseSpec())


class TestClosedForms:
    def test_table_fixed_points(self):
        s = 1.0
        assert closed_form_step(
            IsotropicModel.squared_exponential(), 0.0).eta == 1.0
        assert closed_form_step(IsotropicModel.matern(1), 0.0).eta \
            == pytest.approx(s / math.sqrt(3.0), abs=1e-12)
        assert closed_form_step(IsotropicModel.matern(2), 0.0).eta \
            == pytest.approx(s * (1 + math.sqrt(5.0)) / (2 * math.sqrt(5.0)),
                             abs=1e-12)
        for beta in [0.5, 1.0, 2.0, 10.0]:
            rq = IsotropicModel.rational_quadratic(beta)
            assert closed_form_step(rq, 0.0).eta \
                == pytest.approx(math.sqrt(beta / (1 + beta)), abs=1e-12)
            grq = IsotropicModel.grq_variogram(beta)
            assert closed_form_step(grq, 0.0).eta \
                == pytest.approx(1.0 / math.sqrt(1 + beta), abs=1e-12)

    def test_sqexp_negative_xi(self):
        model = IsotropicModel.squared_exponential()
        result = closed_form_step(model, -2.0)
        assert result.eta == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-14)
        assert numeric_step(model, -2.0).eta == pytest.approx(result.eta,
                                                              abs=1e-8)

    @pytest.mark.parametrize("s", SCALES)
    def test_oracle_agreement_grid(self, s):
        for model in family(s):
            for f in XI_FACTORS:
                xi = f * s
                cf = closed_form_step(model, xi)
                assert cf.method == "closed_form"
                nm = numeric_step(model, xi)
                assert abs(cf.eta - nm.eta) <= 1e-6 * max(s, cf.eta)

    @pytest.mark.parametrize("s", SCALES)
    def test_step_nondecreasing_in_xi(self, s):
        xis = np.linspace(-10 * s, 0.0, 40)
        for model in family(s):
            etas = [closed_form_step(model, xi).eta for xi in xis]
            assert all(b >= a - 1e-12 for a, b in zip(etas, etas[1:]))

    def test_positive_xi_falls_back_to_numeric(self):
        for model in [IsotropicModel.matern(1), IsotropicModel.matern(2),
                      IsotropicModel.rational_quadratic(1.0)]:
            result = closed_form_step(model, 0.1)
            assert result.method == "numeric_fallback"
            assert result.eta > 0
        # squared exponential stays closed-form for xi > 0
        assert closed_form_step(IsotropicModel.squared_exponential(),
                                0.5).method == "closed_form"

    def test_rq_limit_to_sqexp(self):
        beta = 1e4
        s = 1.0
        rq = IsotropicModel.rational_quadratic(beta, length_scale=s)
        se = IsotropicModel.squared_exponential(length_scale=s)
        at_zero = closed_form_step(rq, 0.0).eta
        assert abs(at_zero - s) <= s / (2 * beta)
        for xi in [0.0, -s]:
            assert abs(closed_form_step(rq, xi).eta
                       - closed_form_step(se, xi).eta) <= 1e-3 * s

    def test_matern_trend_toward_sqexp(self):
        se = closed_form_step(IsotropicModel.squared_exponential(), 0.0).eta
        p1 = closed_form_step(IsotropicModel.matern(1), 0.0).eta
        p2 = closed_form_step(IsotropicModel.matern(2), 0.0).eta
        assert abs(p2 - se) < abs(p1 - se)

    def test_scale_covariance(self):
        for c in [2.0, 0.5]:  # powers of two scale bit-exactly
            for xi in [0.0, -0.25, -2.0]:
                se1 = closed_form_step(
                    IsotropicModel.squared_exponential(length_scale=1.0), xi)
                se2 = closed_form_step(
                    IsotropicModel.squared_exponential(length_scale=c), c * xi)
                assert se2.eta == c * se1.eta
                m1 = closed_form_step(IsotropicModel.matern(2), xi)
                m2 = closed_form_step(
                    IsotropicModel.matern(2, length_scale=c), c * xi)
                assert m2.eta == pytest.approx(c * m1.eta, rel=1e-14)

    def test_grq_no_finite_step(self):
        with pytest.raises(NoFiniteStep):
            closed_form_step(IsotropicModel.grq_variogram(-1.0), 0.0)
        with pytest.raises(NoFiniteStep):
            gradient_only_step(IsotropicModel.grq_variogram(-1.5))

    def test_objective_no_worse_than_standing_still(self):
        for model in family(1.0):
            for xi in [-3.0, -0.5, 0.0, 0.5]:
                result = closed_form_step(model, xi)
                assert result.objective_at_eta \
                    <= step_objective(model, xi, 0.0) + 1e-12


class TestNumericStep:
    def test_sqexp_at_zero(self):
        model = IsotropicModel.squared_exponential()
        assert numeric_step(model, 0.0, tol=1e-10).eta \
            == pytest.approx(1.0, abs=1e-8)

    def test_matern_p1_cross_check(self):
        model = IsotropicModel.matern(1)
        expected = (1.0 / math.sqrt(3.0)) / (1.0 + math.sqrt(3.0))
        assert numeric_step(model, -1.0).eta == pytest.approx(expected,
                                                              abs=1e-6)

    def test_extreme_xi_bracket_robustness(self):
        model = IsotropicModel.squared_exponential()
        result = numeric_step(model, -1e6)
        assert 0.0 < result.eta < 1.0
        # asymptotically eta ~ s^2/|xi|
        assert result.eta == pytest.approx(1e-6, rel=1e-2)

    def test_variogram_kind_rejected(self):
        with pytest.raises(ValueError):
            numeric_step(IsotropicModel.grq_variogram(1.0), 0.0)


class TestGradientOnlyStep:
    def test_matches_closed_form(self):
        for beta in [-0.5, 0.0, 1.0, 4.0]:
            model = IsotropicModel.grq_variogram(beta)
            assert gradient_only_step(model).eta \
                == pytest.approx(1.0 / math.sqrt(1.0 + beta), rel=1e-7)

    def test_noise_invariance(self):
        # constant positive denominator: the argmax cannot move
        model = IsotropicModel.grq_variogram(1.0)
        etas = {gradient_only_step(model, grad_var=g).eta
                for g in [0.0, 1.0, 100.0]}
        assert len(etas) == 1


class TestConservativeStep:
    def test_epsilon_validated(self):
        model = IsotropicModel.squared_exponential()
        for eps in [0.0, 1.0, -0.5, 2.0]:
            with pytest.raises(ValueError):
                conservative_step(model, NoiseSpec(), 0.0, 1.0, eps)

    def test_zero_penalty_at_origin(self):
        model = IsotropicModel.squared_exponential()
        assert conditional_variance(model, NoiseSpec(), 0.0) == 0.0

    def test_monotone_approach_to_rfd(self):
        model = IsotropicModel.squared_exponential()
        rfd_eta = closed_form_step(model, 0.0).eta
        etas = [conservative_step(model, NoiseSpec(), 0.0, 1.0, eps).eta
                for eps in [0.5, 0.9, 0.99]]
        assert etas[0] < etas[1] < etas[2] < rfd_eta

    def test_minimizer_beats_standing_still(self):
        model = IsotropicModel.squared_exponential()
        result = conservative_step(model, NoiseSpec(), -1.0, 1.0, 0.5)
        at_zero = -1.0  # value term at eta=0, zero gradient term and penalty
        assert result.objective_at_eta < at_zero + 1e-12
        assert result.eta > 0


class TestRegularizedStep:
    def test_reduction_to_plain_step(self):
        model = IsotropicModel.squared_exponential()
        grad = np.array([3.0, 4.0])
        w = np.array([0.7, -0.2])
        result, direction = regularized_step(model, 0.0, -1.0, grad, w)
        plain = closed_form_step(model, -1.0 / 5.0)
        assert abs(result.eta - plain.eta) <= 1e-10
        np.testing.assert_allclose(direction, -grad / 5.0, atol=1e-12)

    def test_origin_keeps_gradient_direction(self):
        model = IsotropicModel.squared_exponential()
        grad = np.array([1.0, 2.0, -1.0])
        _, direction = regularized_step(model, 0.5, -0.3, grad,
                                        np.zeros(3))
        np.testing.assert_allclose(direction, -grad / np.linalg.norm(grad),
                                   atol=1e-12)

    def test_large_eta_gradient_tends_to_mean_gradient(self):
        model = IsotropicModel.squared_exponential()
        grad = np.array([1.0, -2.0])
        w = np.array([0.5, 0.5])
        g = regularized_gradient(model, 0.7, grad, w, eta=100.0)
        np.testing.assert_allclose(g, 2 * 0.7 * w, atol=1e-6)

    def test_stationary_regularized_gradient(self):
        model = IsotropicModel.squared_exponential()
        with pytest.raises(StationarySample):
            regularized_step(model, 0.0, 0.0, np.zeros(2), np.zeros(2))

    def test_negative_reg_var_rejected(self):
        model = IsotropicModel.squared_exponential()
        with pytest.raises(ValueError):
            regularized_step(model, -1.0, 0.0, np.ones(2), np.zeros(2))
