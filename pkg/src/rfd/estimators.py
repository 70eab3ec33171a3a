"""Best-linear-unbiased-estimator machinery for value + gradient observations.

All coefficients here are the exact Gaussian-conditioning weights for the
observation model  loss_obs = L(w) + e0,  grad_obs = grad L(w) + e1  with
e0 ~ (0, value_var), e1 ~ (0, grad_var * I), everything uncorrelated.  The
per-coordinate gradient variance enters the denominators as
(grad_var - 2 C'(0)) with a matching factor 2 on the C'(r2) numerators, so
the predictions agree with a dense joint-covariance solve to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import (
    IsotropicModel,
    sqc_eval,
    variogram_eval,
    variogram_second_derivative,
)

__all__ = [
    "NoiseSpec",
    "BlueCoeffs",
    "SecondOrderCoeffs",
    "stationary_blue_coeffs",
    "gradient_blue_coeff",
    "conditional_variance",
    "second_order_blue",
    "predict_curve",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Observation noise: value variance E[e0^2] and per-coordinate gradient
    variance.  (0, 0) means an exact oracle."""

    value_var: float = 0.0
    grad_var: float = 0.0

    def __post_init__(self):
        if self.value_var < 0 or self.grad_var < 0:
            raise ValueError("noise variances must be nonnegative")

    @property
    def is_exact(self) -> bool:
        return self.value_var == 0.0 and self.grad_var == 0.0


@dataclass(frozen=True)
class BlueCoeffs:
    """Weights of the linear predictor a * (loss - mu) + <b, grad>."""

    a: float
    b: np.ndarray


@dataclass(frozen=True)
class SecondOrderCoeffs:
    """Weights of the gradient+Hessian predictor
    b_factor * <d, grad> + sum_ij H_ij c[i, j]."""

    b_factor: float
    c: np.ndarray


def stationary_blue_coeffs(model: IsotropicModel, noise: NoiseSpec,
                           d: np.ndarray) -> BlueCoeffs:
    """Prediction weights for the centered value at displacement d from one
    noisy (value, gradient) observation."""
    d = np.asarray(d, dtype=float)
    r2 = float(d @ d)
    c0 = sqc_eval(model, 0.0, 0)
    a = sqc_eval(model, r2, 0) / (c0 + noise.value_var)
    denom = noise.grad_var - 2.0 * sqc_eval(model, 0.0, 1)
    b = (-2.0 * sqc_eval(model, r2, 1) / denom) * d
    return BlueCoeffs(a=a, b=b)


def gradient_blue_coeff(model: IsotropicModel, grad_var: float, r2: float) -> float:
    """Scalar weight on <d, grad> when predicting the increment L(w+d) - L(w)
    from the (possibly noisy) gradient alone."""
    phi1 = variogram_eval(model, r2, 1)
    phi1_0 = variogram_eval(model, 0.0, 1)
    return 2.0 * phi1 / (2.0 * phi1_0 + grad_var)


def conditional_variance(model: IsotropicModel, noise: NoiseSpec,
                         r2: float) -> float:
    """Posterior variance of the value at squared distance r2 from one noisy
    (value, gradient) observation; direction-independent."""
    c0 = sqc_eval(model, 0.0, 0)
    cr = sqc_eval(model, r2, 0)
    c1 = sqc_eval(model, r2, 1)
    denom = noise.grad_var - 2.0 * sqc_eval(model, 0.0, 1)
    var = c0 - cr * cr / (c0 + noise.value_var) - 4.0 * c1 * c1 * r2 / denom
    if var < 0:
        if var < -1e-12 * c0:
            raise ArithmeticError(
                f"conditional variance {var} below rounding tolerance; "
                f"covariance model internally inconsistent")
        var = 0.0
    return var


def second_order_blue(model: IsotropicModel, d: np.ndarray) -> SecondOrderCoeffs:
    """Weights of the best linear predictor of the increment L(w+d) - L(w)
    from the exact gradient and Hessian at w."""
    d = np.asarray(d, dtype=float)
    dim = d.size
    r2 = float(d @ d)
    phi1_0 = variogram_eval(model, 0.0, 1)
    phi1 = variogram_eval(model, r2, 1)
    phi2_0 = variogram_second_derivative(model, 0.0)
    phi2 = variogram_second_derivative(model, r2)
    if phi2_0 == 0.0:
        raise ValueError("phi''(0) = 0: Hessian weights are singular")
    c = -(phi2 / (2.0 * phi2_0)) * np.outer(d, d)
    trace_term = ((phi1_0 - phi1) / (2.0 * phi2_0)
                  + (phi2 / (2.0 * phi2_0)) * r2) / (dim + 2)
    c += trace_term * np.eye(dim)
    return SecondOrderCoeffs(b_factor=phi1 / phi1_0, c=c)


def predict_curve(model: IsotropicModel, noise: NoiseSpec, mu: float,
                  observed: tuple[np.ndarray, float, np.ndarray],
                  offsets, direction: np.ndarray):
    """Conditional mean and two-sigma band along a ray from one observation.

    ``observed`` is (w0, loss, grad); returns a list of
    (offset, mean, two_sigma) with d = offset * direction.
    """
    _, loss, grad = observed
    grad = np.asarray(grad, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if not np.isclose(direction @ direction, 1.0):
        raise ValueError("direction must be unit norm")
    out = []
    for t in offsets:
        d = float(t) * direction
        coeffs = stationary_blue_coeffs(model, noise, d)
        mean = mu + coeffs.a * (loss - mu) + float(coeffs.b @ grad)
        two_sigma = 2.0 * np.sqrt(conditional_variance(model, noise, float(t) ** 2))
        out.append((float(t), mean, two_sigma))
    return out
