"""Isotropic covariance models evaluated in the squared-distance argument.

Every model is represented by a function ``C`` with ``Cov(L(x), L(y)) =
C(||x - y||^2)``, i.e. the canonical argument of all low-level evaluators is
the *squared* distance ``r2``.  Derivatives returned by :func:`sqc_eval` are
derivatives in that squared-distance argument, which is what the step-size
and conditioning formulas consume directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "Kind",
    "IsotropicModel",
    "MaternCoefficients",
    "CovBlocks",
    "UnboundedDerivative",
    "double_factorial",
    "matern_coeffs",
    "sqc_eval",
    "variogram_eval",
    "variogram_second_derivative",
    "cov_blocks",
]

# GRQ variograms with |beta| below this route to the logarithmic branch.
_GRQ_LOG_BRANCH = 1e-12


class UnboundedDerivative(ArithmeticError):
    """The requested derivative diverges at the requested argument."""


class Kind(str, Enum):
    SQUARED_EXPONENTIAL = "sqexp"
    MATERN = "matern"
    RATIONAL_QUADRATIC = "rq"
    GRQ_VARIOGRAM = "grq_variogram"


@dataclass(frozen=True)
class IsotropicModel:
    """An isotropic covariance (or scale-normalized variogram) family.

    ``smoothness`` holds the half-integer index p (nu = p + 1/2) for Matern
    and the exponent beta for the rational-quadratic kinds.  The pure
    variogram kind is scale-normalized (gamma(1) = 1) and carries neither
    variance nor length scale.
    """

    kind: Kind
    variance: float | None = None
    length_scale: float | None = None
    smoothness: float | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.GRQ_VARIOGRAM:
            if self.variance is not None or self.length_scale is not None:
                raise ValueError("variogram kind is scale-normalized; "
                                 "variance/length_scale do not apply")
            if self.smoothness is None or self.smoothness < -2:
                raise ValueError("variogram exponent beta must be >= -2")
            return
        if self.variance is None or self.variance <= 0:
            raise ValueError("variance must be > 0")
        if self.length_scale is None or self.length_scale <= 0:
            raise ValueError("length_scale must be > 0")
        if kind is Kind.MATERN:
            if self.smoothness not in (1, 2):
                raise ValueError("closed forms exist for p in {1, 2} only; "
                                 "use matern_coeffs for other p")
            object.__setattr__(self, "smoothness", int(self.smoothness))
        elif kind is Kind.RATIONAL_QUADRATIC:
            if self.smoothness is None or self.smoothness <= 0:
                raise ValueError("rational quadratic requires beta > 0")

    @classmethod
    def squared_exponential(cls, variance: float = 1.0, length_scale: float = 1.0):
        return cls(Kind.SQUARED_EXPONENTIAL, variance, length_scale)

    @classmethod
    def matern(cls, p: int, variance: float = 1.0, length_scale: float = 1.0):
        return cls(Kind.MATERN, variance, length_scale, p)

    @classmethod
    def rational_quadratic(cls, beta: float, variance: float = 1.0,
                           length_scale: float = 1.0):
        return cls(Kind.RATIONAL_QUADRATIC, variance, length_scale, beta)

    @classmethod
    def grq_variogram(cls, beta: float):
        return cls(Kind.GRQ_VARIOGRAM, smoothness=beta)

    @property
    def is_covariance(self) -> bool:
        return self.kind is not Kind.GRQ_VARIOGRAM

    @property
    def has_finite_step(self) -> bool:
        """False for variogram exponents beta <= -1, where the gradient-only
        objective keeps improving forever and no finite optimal step exists."""
        if self.kind is Kind.GRQ_VARIOGRAM:
            return self.smoothness > -1
        return True

    @property
    def effective_scale(self) -> float:
        """Natural step-size unit: the argument scale at which the model decays."""
        if self.kind is Kind.RATIONAL_QUADRATIC:
            return self.length_scale * math.sqrt(self.smoothness)
        if self.kind is Kind.GRQ_VARIOGRAM:
            return 1.0
        return self.length_scale


@dataclass(frozen=True)
class MaternCoefficients:
    """Exact rational polynomial coefficients of the half-integer Matern family.

    ``c`` are the covariance coefficients, ``d`` the derivative coefficients;
    both are kept as exact fractions because the factorial ratios overflow
    naive floats for larger p.
    """

    p: int
    c: tuple[Fraction, ...]
    d: tuple[Fraction, ...]


def double_factorial(n: int) -> int:
    """Product of same-parity integers down from n; (-1)!! == 0!! == 1."""
    if n < -1:
        raise ValueError("double factorial defined for n >= -1")
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@lru_cache(maxsize=None)
def matern_coeffs(p: int) -> MaternCoefficients:
    """Exact coefficients for the Matern model with nu = p + 1/2.

    c(k) = p!/(2p)! * (2p-k)!/((p-k)! k!) * 2^k, and d(k) is the coefficient
    sequence of the first derivative: d(k) = c(k+1) - (k+2) c(k+2) for
    k <= p-2 and d(p-1) = c(p).
    """
    if p < 1:
        raise ValueError("p >= 1 required (p = 0 is the nugget, "
                         "not differentiable)")
    pre = Fraction(math.factorial(p), math.factorial(2 * p))

    def c_of(k: int) -> Fraction:
        return pre * Fraction(math.factorial(2 * p - k),
                              math.factorial(p - k) * math.factorial(k)) * 2 ** k

    c = tuple(c_of(k) for k in range(p + 1))
    d = tuple(c[k + 1] - (k + 2) * c[k + 2] for k in range(p - 1)) + (c[p],)
    return MaternCoefficients(p=p, c=c, d=d)


@lru_cache(maxsize=None)
def _matern_float_coeffs(p: int):
    mc = matern_coeffs(p)
    c = np.array([float(x) for x in mc.c])
    d = np.array([float(x) for x in mc.d])
    # Coefficients of (P'(m) - P(m))/m where P(m) = sum d_k m^k; the constant
    # term d_1 - d_0 cancels exactly for p >= 2, leaving a polynomial.
    if p >= 2:
        q = np.zeros(p - 1)
        for j in range(1, p - 1):
            q[j - 1] = float((j + 1) * mc.d[j + 1] - mc.d[j])
        q[p - 2] += -float(mc.d[p - 1])
    else:
        q = None
    return c, d, q


def _matern_sqc(model: IsotropicModel, r2: float, order: int) -> float:
    p = int(model.smoothness)
    sigma2 = model.variance
    s = model.length_scale
    c, d, q = _matern_float_coeffs(p)
    m = math.sqrt((2 * p + 1) * r2) / s
    decay = math.exp(-m)
    if order == 0:
        return sigma2 * decay * _polyval(c, m)
    if order == 1:
        return -sigma2 * (2 * p + 1) / (2 * s ** 2) * decay * _polyval(d, m)
    # order 2: the chain rule brings in a 1/m factor; for p = 1 the limit at
    # m = 0 is +infinity, for p >= 2 the constant term cancels analytically.
    if p == 1:
        if m == 0.0:
            raise UnboundedDerivative(
                "Matern p=1 second derivative diverges at r2=0")
        return sigma2 * (2 * p + 1) ** 2 / (4 * s ** 4) * decay * d[0] / m
    return -sigma2 * (2 * p + 1) ** 2 / (4 * s ** 4) * decay * _polyval(q, m)


def _polyval(coeffs, m: float) -> float:
    out = 0.0
    for a in reversed(coeffs):
        out = out * m + a
    return out


def sqc_eval(model: IsotropicModel, r2: float, order: int = 0) -> float:
    """Evaluate C(r2) or its first/second derivative in squared distance."""
    if r2 < 0:
        raise ValueError(f"squared distance must be >= 0, got {r2}")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1, or 2")
    if not model.is_covariance:
        raise ValueError("pure variogram kind has no covariance scale; "
                         "use variogram_eval")
    if model.kind is Kind.SQUARED_EXPONENTIAL:
        sigma2, s = model.variance, model.length_scale
        val = sigma2 * math.exp(-r2 / (2 * s ** 2))
        return val * (-1.0 / (2 * s ** 2)) ** order
    if model.kind is Kind.MATERN:
        return _matern_sqc(model, r2, order)
    # rational quadratic
    sigma2, s, beta = model.variance, model.length_scale, model.smoothness
    base = 1.0 + r2 / (beta * s ** 2)
    if order == 0:
        return sigma2 * base ** (-beta / 2)
    if order == 1:
        return -sigma2 / (2 * s ** 2) * base ** (-beta / 2 - 1)
    return sigma2 * (beta + 2) / (4 * beta * s ** 4) * base ** (-beta / 2 - 2)


def _grq_phi(beta: float, r2: float, order: int) -> float:
    if abs(beta) < _GRQ_LOG_BRANCH:
        if order == 0:
            return math.log1p(r2) / math.log(2)
        if order == 1:
            return 1.0 / (math.log(2) * (1.0 + r2))
        return -1.0 / (math.log(2) * (1.0 + r2) ** 2)
    norm = 2.0 ** (-beta / 2) - 1.0
    if order == 0:
        return ((1.0 + r2) ** (-beta / 2) - 1.0) / norm
    if order == 1:
        return (-beta / 2) * (1.0 + r2) ** (-beta / 2 - 1) / norm
    return (-beta / 2) * (-beta / 2 - 1) * (1.0 + r2) ** (-beta / 2 - 2) / norm


def variogram_eval(model: IsotropicModel, r2: float, order: int = 0) -> float:
    """gamma(r2) = C(0) - C(r2) for covariance kinds, the normalized phi for
    the pure variogram kind; ``order`` selects the value or first derivative."""
    if r2 < 0:
        raise ValueError(f"squared distance must be >= 0, got {r2}")
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    if model.kind is Kind.GRQ_VARIOGRAM:
        return _grq_phi(model.smoothness, r2, order)
    if order == 0:
        return sqc_eval(model, 0.0, 0) - sqc_eval(model, r2, 0)
    return -sqc_eval(model, r2, 1)


def variogram_second_derivative(model: IsotropicModel, r2: float) -> float:
    """phi''(r2); raises UnboundedDerivative where the model is not twice
    differentiable (Matern p=1 at the origin)."""
    if model.kind is Kind.GRQ_VARIOGRAM:
        return _grq_phi(model.smoothness, r2, 2)
    return -sqc_eval(model, r2, 2)


@dataclass(frozen=True)
class CovBlocks:
    """Joint value/gradient covariance blocks between two points.

    vv = Cov(L(x), L(y)); gv[i] = Cov(dL/dx_i (x), L(y));
    gg[i, j] = Cov(dL/dx_i (x), dL/dy_j (y)).
    """

    vv: float
    gv: np.ndarray
    gg: np.ndarray


def cov_blocks(model: IsotropicModel, x: np.ndarray, y: np.ndarray) -> CovBlocks:
    """Value/gradient cross-covariance blocks of an isotropic random function."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"points must be 1-d and of equal dimension, "
                         f"got {x.shape} and {y.shape}")
    h = x - y
    r2 = float(h @ h)
    c0 = sqc_eval(model, r2, 0)
    c1 = sqc_eval(model, r2, 1)
    c2 = sqc_eval(model, r2, 2)
    gg = -4.0 * c2 * np.outer(h, h) - 2.0 * c1 * np.eye(x.size)
    return CovBlocks(vv=c0, gv=2.0 * c1 * h, gg=gg)
