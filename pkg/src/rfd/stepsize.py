"""Optimal step sizes from covariance models.

The 1-d objective being minimized is

    J(eta) = C(eta^2)/C(0) * xi  -  eta * C'(eta^2)/C'(0)

whose argmin is the step size.  Closed forms exist for the squared
exponential (all xi), Matern p in {1, 2} and rational quadratic (xi <= 0),
and the gradient-only variogram case (xi-free); a golden-section minimizer
doubles as the independent oracle and as the fallback for xi > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import IsotropicModel, Kind, sqc_eval, variogram_eval
from .estimators import NoiseSpec, conditional_variance

__all__ = [
    "NoiseSpec",
    "StepContext",
    "StepResult",
    "NumericFailure",
    "NoFiniteStep",
    "StationarySample",
    "xi_noise_factor",
    "compute_xi",
    "step_objective",
    "closed_form_step",
    "numeric_step",
    "gradient_only_step",
    "conservative_step",
    "regularized_step",
    "regularized_gradient",
]

GOLDEN_TOL = 1e-10
GOLDEN_MAX_ITER = 200
RQ_BISECT_ITER = 50
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class NumericFailure(RuntimeError):
    """A numeric routine could not produce a trustworthy result."""


class NoFiniteStep(ValueError):
    """The step-size objective has no finite minimizer for this model."""


class StationarySample(RuntimeError):
    """The observed gradient is zero; the step direction is undefined."""


@dataclass(frozen=True)
class StepContext:
    """Scalar inputs of one step-size query."""

    loss: float
    mu: float
    grad_norm: float
    noise: NoiseSpec
    xi: float

    @classmethod
    def from_observation(cls, model: IsotropicModel, loss: float, mu: float,
                         grad_norm: float, noise: NoiseSpec) -> "StepContext":
        return cls(loss=loss, mu=mu, grad_norm=grad_norm, noise=noise,
                   xi=compute_xi(model, loss, mu, grad_norm, noise))


@dataclass(frozen=True)
class StepResult:
    eta: float
    method: str  # "closed_form" or "numeric_fallback"
    objective_at_eta: float


def xi_noise_factor(model: IsotropicModel, noise: NoiseSpec) -> float:
    """Constant noise correction of xi; exactly 1 for an exact oracle."""
    c0 = sqc_eval(model, 0.0, 0)
    c1_0 = sqc_eval(model, 0.0, 1)
    return (c0 / (c0 + noise.value_var)) * ((noise.grad_var - 2.0 * c1_0)
                                            / (-2.0 * c1_0))


def compute_xi(model: IsotropicModel, loss: float, mu: float,
               grad_norm: float, noise: NoiseSpec) -> float:
    """Normalized loss-above-mean per unit gradient norm."""
    if grad_norm <= 0.0:
        raise StationarySample("gradient norm is zero")
    return xi_noise_factor(model, noise) * (loss - mu) / grad_norm


def step_objective(model: IsotropicModel, xi: float, eta: float) -> float:
    """J(eta); for the pure variogram kind the xi-free gradient-only form."""
    if model.kind is Kind.GRQ_VARIOGRAM:
        return -eta * variogram_eval(model, eta * eta, 1) / variogram_eval(model, 0.0, 1)
    e2 = eta * eta
    return (sqc_eval(model, e2, 0) / sqc_eval(model, 0.0, 0) * xi
            - eta * sqc_eval(model, e2, 1) / sqc_eval(model, 0.0, 1))


def _bracket(model: IsotropicModel, xi: float) -> float:
    return 2.0 * abs(xi) + 10.0 * model.effective_scale


def _golden_min(f, lo: float, hi: float, tol: float):
    """Golden-section minimizer; terminates on relative interval width.

    Near the minimum the objective is flat to rounding, which caps plain
    golden section at ~sqrt(eps) relative accuracy; one parabolic fit at
    eps^(1/3) spacing recovers the vertex well below that.
    """
    left = lo
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(GOLDEN_MAX_ITER):
        if hi - lo <= tol * (abs(lo) + abs(hi)) / 2.0 + 1e-300:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = f(x2)
    x = (lo + hi) / 2.0
    fx = f(x)

    h = 6e-6 * max(abs(x), 1e-30)
    if x - h > left:
        fm, fp = f(x - h), f(x + h)
        denom = fm - 2.0 * fx + fp
        if denom > 0.0:
            vertex = x + 0.5 * h * (fm - fp) / denom
            fv = f(vertex)
            if fv <= fx:
                return vertex, fv
    return x, fx


_SCAN_POINTS = 64


def _minimize_on_ray(f, hi: float, tol: float, what: str):
    """Global 1-d minimization on [0, hi]: coarse scan to isolate the basin
    (the objectives are not unimodal for sample losses above the mean),
    golden section within it, widening the bracket once if the minimum sits
    at the right edge."""
    for attempt in range(2):
        grid = np.linspace(0.0, hi, _SCAN_POINTS + 1)
        values = [f(x) for x in grid]
        i = int(np.argmin(values))
        if i == _SCAN_POINTS:
            hi *= 10.0
            continue
        lo_i = grid[max(i - 1, 0)]
        hi_i = grid[i + 1]
        x, fx = _golden_min(f, lo_i, hi_i, tol)
        if x > 0.99 * hi:
            hi *= 10.0
            continue
        return x, fx
    raise NumericFailure(f"{what} bracket exhausted at [0, {hi}]")


def numeric_step(model: IsotropicModel, xi: float,
                 tol: float = GOLDEN_TOL) -> StepResult:
    """Golden-section minimization of J; the oracle for every closed form."""
    if not model.is_covariance:
        raise ValueError("numeric_step requires a covariance kind; "
                         "use gradient_only_step for pure variograms")

    def f(eta):
        return step_objective(model, xi, eta)

    eta, obj = _minimize_on_ray(f, _bracket(model, xi), tol,
                                f"step size (xi = {xi})")
    return StepResult(eta=eta, method="numeric_fallback", objective_at_eta=obj)


def gradient_only_step(model: IsotropicModel, grad_var: float = 0.0,
                       tol: float = GOLDEN_TOL) -> StepResult:
    """Argmax of eta * phi'(eta^2) / (2 phi'(0) + grad_var).

    The noise enters only through the constant positive denominator, so the
    argmax cannot depend on it; the minimization therefore runs on the
    noise-free normalized objective and the noise weight only rescales the
    reported objective value.
    """
    if not model.has_finite_step:
        raise NoFiniteStep("variogram exponent beta <= -1 admits no finite "
                           "optimal step")
    phi1_0 = variogram_eval(model, 0.0, 1)

    def f(eta):
        return -eta * variogram_eval(model, eta * eta, 1) / phi1_0

    eta, obj = _minimize_on_ray(f, _bracket(model, 0.0), tol, "gradient-only")
    weight = 2.0 * phi1_0 / (2.0 * phi1_0 + grad_var)
    return StepResult(eta=eta, method="numeric_fallback",
                      objective_at_eta=obj * weight)


def _rq_root(beta: float, a: float) -> float:
    """Unique positive root of 1 + a t - (1+beta) t^2 + a t^3 for a <= 0,
    bisected on [0, 1/sqrt(1+beta)] where the cubic is monotone decreasing."""

    def poly(t):
        return 1.0 + a * t - (1.0 + beta) * t * t + a * t ** 3

    hi = 1.0 / math.sqrt(1.0 + beta)
    if poly(hi) > 0.0:  # rounding at the endpoint (exact root for a = 0)
        return hi
    lo = 0.0
    for _ in range(RQ_BISECT_ITER):
        mid = (lo + hi) / 2.0
        if poly(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def closed_form_step(model: IsotropicModel, xi: float) -> StepResult:
    """Analytic optimal step size; falls back to the numeric minimizer where
    the closed form assumes xi <= 0 and the sample loss is above the mean."""
    s = model.length_scale

    if model.kind is Kind.SQUARED_EXPONENTIAL:
        eta = xi / 2.0 + math.sqrt((xi / 2.0) ** 2 + s * s)
    elif model.kind is Kind.GRQ_VARIOGRAM:
        if not model.has_finite_step:
            raise NoFiniteStep("variogram exponent beta <= -1 admits no "
                               "finite optimal step")
        eta = 1.0 / math.sqrt(1.0 + model.smoothness)
        return StepResult(eta=eta, method="closed_form",
                          objective_at_eta=step_objective(model, xi, eta))
    elif xi > 0.0:
        return numeric_step(model, xi)
    elif model.kind is Kind.MATERN:
        p = int(model.smoothness)
        if p == 1:
            eta = (s / math.sqrt(3.0)) / (1.0 - math.sqrt(3.0) * xi / s)
        else:
            # positive root of a t^2 - b t - 1 with t = sqrt(5) eta / s; the
            # linear coefficient is b, not a (first-order condition of the
            # step objective; the numeric oracle pins this down)
            a = 1.0 - math.sqrt(5.0) * xi / (3.0 * s)
            b = 1.0 + math.sqrt(5.0) * xi / (3.0 * s)
            eta = (s / math.sqrt(5.0)) * (b + math.sqrt(b * b + 4.0 * a)) / (2.0 * a)
    else:  # rational quadratic
        beta = model.smoothness
        eta = s * math.sqrt(beta) * _rq_root(beta, math.sqrt(beta) * xi / s)

    return StepResult(eta=eta, method="closed_form",
                      objective_at_eta=step_objective(model, xi, eta))


def conservative_step(model: IsotropicModel, noise: NoiseSpec,
                      loss_minus_mu: float, grad_norm: float, epsilon: float,
                      tol: float = GOLDEN_TOL) -> StepResult:
    """Minimize the (1-epsilon)-confidence upper bound on the loss.

    The objective keeps the raw value/gradient weights (it cannot be
    normalized by the gradient norm) and adds sqrt(Var / epsilon) with Var
    the conditional variance at distance eta.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    if grad_norm < 0.0:
        raise ValueError("grad_norm must be >= 0")
    c0 = sqc_eval(model, 0.0, 0)
    gdenom = noise.grad_var - 2.0 * sqc_eval(model, 0.0, 1)

    def f(eta):
        e2 = eta * eta
        penalty = math.sqrt(conditional_variance(model, noise, e2) / epsilon)
        return (sqc_eval(model, e2, 0) / (c0 + noise.value_var) * loss_minus_mu
                + 2.0 * sqc_eval(model, e2, 1) / gdenom * eta * grad_norm
                + penalty)

    xi_like = loss_minus_mu / grad_norm if grad_norm > 0 else 0.0
    eta, obj = _minimize_on_ray(f, _bracket(model, xi_like), tol,
                                "conservative step")
    return StepResult(eta=eta, method="numeric_fallback", objective_at_eta=obj)


def regularized_gradient(model: IsotropicModel, reg_var: float,
                         grad: np.ndarray, w: np.ndarray,
                         eta: float) -> np.ndarray:
    """Convex combination of the observed gradient and the mean gradient
    2 reg_var w, weighted by the trust decay C'(eta^2)/C'(0)."""
    decay = sqc_eval(model, eta * eta, 1) / sqc_eval(model, 0.0, 1)
    return decay * np.asarray(grad, dtype=float) \
        + (1.0 - decay) * 2.0 * reg_var * np.asarray(w, dtype=float)


def regularized_step(model: IsotropicModel, reg_var: float,
                     loss_minus_mean: float, grad: np.ndarray, w: np.ndarray,
                     tol: float = GOLDEN_TOL):
    """Step length and unit descent direction under a quadratic mean
    reg_var ||w||^2 + mu; returns (StepResult, direction)."""
    grad = np.asarray(grad, dtype=float)
    w = np.asarray(w, dtype=float)
    if reg_var < 0.0:
        raise ValueError("reg_var must be >= 0")

    if reg_var == 0.0:
        # the objective collapses to plain RFD; reuse the closed form so the
        # reduction is exact rather than oracle-precision
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm == 0.0:
            raise StationarySample("stationary regularized gradient")
        result = closed_form_step(model, loss_minus_mean / grad_norm)
        return result, -grad / grad_norm

    c0 = sqc_eval(model, 0.0, 0)

    def g_norm(eta):
        return float(np.linalg.norm(regularized_gradient(model, reg_var,
                                                         grad, w, eta)))

    def f(eta):
        e2 = eta * eta
        return (reg_var * e2
                + sqc_eval(model, e2, 0) / c0 * loss_minus_mean
                - eta * g_norm(eta))

    grad_norm = float(np.linalg.norm(grad))
    xi_like = loss_minus_mean / grad_norm if grad_norm > 0 else 0.0
    eta, obj = _minimize_on_ray(f, _bracket(model, xi_like), tol,
                                "regularized step")
    g = regularized_gradient(model, reg_var, grad, w, eta)
    gn = float(np.linalg.norm(g))
    if gn == 0.0:
        raise StationarySample("stationary regularized gradient")
    return (StepResult(eta=eta, method="numeric_fallback", objective_at_eta=obj),
            -g / gn)
