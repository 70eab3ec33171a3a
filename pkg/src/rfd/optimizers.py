"""Optimization loops driven by pluggable loss oracles.

All runs emit a :class:`Trajectory` with steps+1 records.  Record n carries
the iterate w_n together with the observation that produced it; for the
momentum variant the evaluation happens at the look-ahead point, which is
also where xi and the step size are computed, and that choice is recorded in
the trajectory metadata.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy.linalg import cho_solve

from .covariance import IsotropicModel
from .estimators import NoiseSpec
from .simulator import GrfSampler
from .stepsize import (
    StationarySample,
    closed_form_step,
    compute_xi,
    conservative_step,
    regularized_step,
)

__all__ = [
    "Observation",
    "LossOracle",
    "GrfOracle",
    "FunctionOracle",
    "OptimizerConfig",
    "BaselineHyper",
    "Trajectory",
    "rfd_step",
    "run",
    "run_rfd",
    "run_rfm_star",
    "run_conservative",
    "run_regularized",
    "run_baseline",
]


@dataclass(frozen=True)
class Observation:
    loss_true: float
    grad_true: np.ndarray
    loss: float
    grad: np.ndarray


class LossOracle(Protocol):
    dim: int

    def observe(self, w: np.ndarray) -> Observation: ...


class GrfOracle:
    """Adapter exposing a GrfSampler as a loss oracle with optional noise.

    The noise stream is separate from the sampler's own generator, so the
    underlying realization is unchanged by observing it noisily.  By default
    value and gradient noise come from one stream (one observation per
    query); ``independent_grad_noise`` draws the gradient perturbation from
    a second stream instead.
    """

    def __init__(self, sampler: GrfSampler, noise: NoiseSpec = NoiseSpec(),
                 noise_seed: int = 0, independent_grad_noise: bool = False):
        self.sampler = sampler
        self.dim = sampler.dim
        self.noise = noise
        self._value_rng = np.random.default_rng([noise_seed, 0])
        self._grad_rng = (np.random.default_rng([noise_seed, 1])
                          if independent_grad_noise else self._value_rng)

    def observe(self, w: np.ndarray) -> Observation:
        value, grad = self.sampler.eval(w)
        loss, g = value, grad
        if self.noise.value_var > 0:
            loss = value + math.sqrt(self.noise.value_var) \
                * self._value_rng.standard_normal()
        if self.noise.grad_var > 0:
            g = grad + math.sqrt(self.noise.grad_var) \
                * self._grad_rng.standard_normal(self.dim)
        return Observation(loss_true=value, grad_true=grad, loss=loss, grad=g)


class FunctionOracle:
    """Deterministic oracle around a callable w -> (loss, grad)."""

    def __init__(self, fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
                 dim: int):
        self._fn = fn
        self.dim = dim

    def observe(self, w: np.ndarray) -> Observation:
        loss, grad = self._fn(np.asarray(w, dtype=float))
        grad = np.asarray(grad, dtype=float)
        return Observation(loss_true=float(loss), grad_true=grad,
                           loss=float(loss), grad=grad)


@dataclass(frozen=True)
class OptimizerConfig:
    model: IsotropicModel
    steps: int
    mu: float = 0.0
    noise: NoiseSpec = NoiseSpec()
    xi_ema: float = 0.0
    A: np.ndarray | None = None
    variant: str = "rfd"
    epsilon: float = 0.5     # conservative confidence level
    reg_var: float = 0.0     # regularized mean curvature

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not 0.0 <= self.xi_ema < 1.0:
            raise ValueError("xi_ema must be in [0, 1)")
        if self.variant not in ("rfd", "rfm_star", "conservative", "regularized"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.A is not None:
            a = np.asarray(self.A, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError("A must be square")
            if not np.allclose(a, a.T):
                raise ValueError("A must be symmetric")
            try:
                chol = np.linalg.cholesky(a)
            except np.linalg.LinAlgError as exc:
                raise ValueError("A must be positive definite") from exc
            object.__setattr__(self, "A", a)
            object.__setattr__(self, "_a_chol", chol)

    def solve_a(self, g: np.ndarray) -> np.ndarray:
        if self.A is None:
            return g
        return cho_solve((self._a_chol, True), g)


@dataclass(frozen=True)
class BaselineHyper:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be > 0")


@dataclass
class Trajectory:
    """Per-record log of one optimizer run (length steps + 1).

    ``etas`` holds the step length taken from record n (the algorithm's step
    size for the descent variants, the Euclidean displacement for baselines);
    the final record's eta describes the step that would come next where that
    is well defined, else NaN.
    """

    iterates: list[np.ndarray] = field(default_factory=list)
    eval_points: list[np.ndarray] = field(default_factory=list)
    loss_true: list[float] = field(default_factory=list)
    loss_observed: list[float] = field(default_factory=list)
    gradients: list[np.ndarray] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    xis: list[float] = field(default_factory=list)
    etas: list[float] = field(default_factory=list)
    cos_prev_grad: list[float] = field(default_factory=list)
    stationary: list[bool] = field(default_factory=list)
    wall_time: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iterates)

    def append(self, iterate, eval_point, obs: Observation, xi, eta,
               stationary=False):
        self.iterates.append(np.array(iterate, dtype=float))
        self.eval_points.append(np.array(eval_point, dtype=float))
        self.loss_true.append(float(obs.loss_true))
        self.loss_observed.append(float(obs.loss))
        grad = np.array(obs.grad, dtype=float)
        self.gradients.append(grad)
        self.grad_norms.append(float(np.linalg.norm(grad)))
        self.xis.append(float(xi))
        self.etas.append(float(eta))
        if len(self.gradients) >= 2:
            self.cos_prev_grad.append(_cosine(self.gradients[-2], grad))
        else:
            self.cos_prev_grad.append(math.nan)
        self.stationary.append(bool(stationary))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return math.nan
    return float(a @ b / (na * nb))


class _XiSmoother:
    """Exponential moving average of xi; factor 0 is a no-op."""

    def __init__(self, factor: float):
        self.factor = factor
        self._state: float | None = None

    def update(self, xi: float) -> float:
        if self.factor == 0.0:
            return xi
        if self._state is None:
            self._state = xi
        else:
            self._state = self.factor * self._state + (1.0 - self.factor) * xi
        return self._state


def rfd_step(config: OptimizerConfig, w: np.ndarray, obs: Observation,
             xi: float | None = None):
    """One descent update; returns (w_next, xi, eta, stationary).

    A zero observed gradient yields a zero step flagged stationary rather
    than terminating: on a random landscape the event has probability zero
    and benchmark runs have fixed length.
    """
    direction = config.solve_a(obs.grad)
    norm_sq = float(direction @ obs.grad)
    if norm_sq <= 0.0:
        return np.array(w, dtype=float), math.nan, 0.0, True
    norm_a = math.sqrt(norm_sq)
    if xi is None:
        xi = compute_xi(config.model, obs.loss, config.mu, norm_a, config.noise)
    eta = closed_form_step(config.model, xi).eta
    w_next = np.asarray(w, dtype=float) - (eta / norm_a) * direction
    return w_next, xi, eta, False


def run_rfd(oracle: LossOracle, config: OptimizerConfig,
            w0: np.ndarray) -> Trajectory:
    start = time.perf_counter()
    traj = Trajectory(metadata={"variant": "rfd", "xi_ema": config.xi_ema})
    smoother = _XiSmoother(config.xi_ema)
    w = np.array(w0, dtype=float)
    for _ in range(config.steps + 1):
        obs = oracle.observe(w)
        direction = config.solve_a(obs.grad)
        norm_sq = float(direction @ obs.grad)
        if norm_sq <= 0.0:
            traj.append(w, w, obs, math.nan, 0.0, stationary=True)
            continue
        norm_a = math.sqrt(norm_sq)
        xi = smoother.update(compute_xi(config.model, obs.loss, config.mu,
                                        norm_a, config.noise))
        w_next, xi, eta, stat = rfd_step(config, w, obs, xi=xi)
        traj.append(w, w, obs, xi, eta, stationary=stat)
        w = w_next
    traj.wall_time = time.perf_counter() - start
    return traj


def run_rfm_star(oracle: LossOracle, config: OptimizerConfig,
                 w0: np.ndarray) -> Trajectory:
    """Nesterov-shaped descent with halved step sizes and beta_n = (n-1)/(n+2).

    xi and the step size are computed at the look-ahead point, which is also
    the evaluation the record keeps.
    """
    start = time.perf_counter()
    traj = Trajectory(metadata={"variant": "rfm_star", "xi_ema": config.xi_ema,
                                "xi_evaluated_at": "lookahead_point"})
    smoother = _XiSmoother(config.xi_ema)
    w = np.array(w0, dtype=float)
    w_prev = w.copy()

    obs0 = oracle.observe(w)
    xi0, eta0 = _half_step_quantities(config, smoother, obs0, peek=True)
    traj.append(w, w, obs0, xi0, eta0)

    for n in range(1, config.steps + 1):
        beta = (n - 1) / (n + 2)
        y = w + beta * (w - w_prev)
        obs = oracle.observe(y)
        norm = float(np.linalg.norm(obs.grad))
        if norm == 0.0:
            w_prev, w = w, y  # momentum-only update
            traj.append(w, y, obs, math.nan, 0.0, stationary=True)
            continue
        xi = smoother.update(compute_xi(config.model, obs.loss, config.mu,
                                        norm, config.noise))
        eta = 0.5 * closed_form_step(config.model, xi).eta
        w_prev, w = w, y - (eta / norm) * obs.grad
        traj.append(w, y, obs, xi, eta)
    traj.wall_time = time.perf_counter() - start
    return traj


def _half_step_quantities(config, smoother, obs, peek=False):
    norm = float(np.linalg.norm(obs.grad))
    if norm == 0.0:
        return math.nan, 0.0
    xi_raw = compute_xi(config.model, obs.loss, config.mu, norm, config.noise)
    xi = xi_raw if peek else smoother.update(xi_raw)
    return xi, 0.5 * closed_form_step(config.model, xi).eta


def run_conservative(oracle: LossOracle, config: OptimizerConfig,
                     w0: np.ndarray) -> Trajectory:
    if config.A is not None:
        raise ValueError("anisotropy is not supported for the conservative "
                         "variant")
    start = time.perf_counter()
    traj = Trajectory(metadata={"variant": "conservative",
                                "epsilon": config.epsilon})
    w = np.array(w0, dtype=float)
    for _ in range(config.steps + 1):
        obs = oracle.observe(w)
        norm = float(np.linalg.norm(obs.grad))
        result = conservative_step(config.model, config.noise,
                                   obs.loss - config.mu, norm, config.epsilon)
        xi = (obs.loss - config.mu) / norm if norm > 0 else math.nan
        if norm == 0.0:
            traj.append(w, w, obs, xi, 0.0, stationary=True)
            continue
        traj.append(w, w, obs, xi, result.eta)
        w = w - (result.eta / norm) * obs.grad
    traj.wall_time = time.perf_counter() - start
    return traj


def run_regularized(oracle: LossOracle, config: OptimizerConfig,
                    w0: np.ndarray) -> Trajectory:
    if config.A is not None:
        raise ValueError("anisotropy is not supported for the regularized "
                         "variant")
    start = time.perf_counter()
    traj = Trajectory(metadata={"variant": "regularized",
                                "reg_var": config.reg_var})
    w = np.array(w0, dtype=float)
    for _ in range(config.steps + 1):
        obs = oracle.observe(w)
        mean_at_w = config.reg_var * float(w @ w) + config.mu
        norm = float(np.linalg.norm(obs.grad))
        xi = (obs.loss - mean_at_w) / norm if norm > 0 else math.nan
        try:
            result, direction = regularized_step(
                config.model, config.reg_var, obs.loss - mean_at_w,
                obs.grad, w)
        except StationarySample:
            traj.append(w, w, obs, xi, 0.0, stationary=True)
            continue
        traj.append(w, w, obs, xi, result.eta)
        w = w + result.eta * direction
    traj.wall_time = time.perf_counter() - start
    return traj


def run(oracle: LossOracle, config: OptimizerConfig,
        w0: np.ndarray) -> Trajectory:
    runner = {"rfd": run_rfd, "rfm_star": run_rfm_star,
              "conservative": run_conservative,
              "regularized": run_regularized}[config.variant]
    return runner(oracle, config, w0)


def run_baseline(kind: str, hyper: BaselineHyper, oracle: LossOracle,
                 w0: np.ndarray, steps: int) -> Trajectory:
    """Reference optimizers logged in the same trajectory format.

    gd: w -= lr * g.  nesterov: look-ahead momentum with beta_n = (n-1)/(n+2)
    and constant lr.  adam / nadam: bias-corrected adaptive moments with the
    usual defaults lr=0.001, decays (0.9, 0.999), floor 1e-8.
    """
    if kind not in ("gd", "nesterov", "adam", "nadam"):
        raise ValueError(f"unknown baseline {kind!r}")
    start = time.perf_counter()
    traj = Trajectory(metadata={"variant": kind, "lr": hyper.lr})
    w = np.array(w0, dtype=float)
    w_prev = w.copy()
    m = np.zeros_like(w)
    v = np.zeros_like(w)

    if kind == "nesterov":
        obs0 = oracle.observe(w)
        traj.append(w, w, obs0, math.nan, math.nan)
        for n in range(1, steps + 1):
            beta = (n - 1) / (n + 2)
            y = w + beta * (w - w_prev)
            obs = oracle.observe(y)
            w_prev, w = w, y - hyper.lr * obs.grad
            traj.append(w, y, obs, math.nan,
                        float(np.linalg.norm(w - w_prev)))
        traj.wall_time = time.perf_counter() - start
        return traj

    for t in range(steps + 1):
        obs = oracle.observe(w)
        if t == steps:
            traj.append(w, w, obs, math.nan, math.nan)
            break
        g = obs.grad
        if kind == "gd":
            delta = -hyper.lr * g
        else:
            m = hyper.beta1 * m + (1 - hyper.beta1) * g
            v = hyper.beta2 * v + (1 - hyper.beta2) * g * g
            bc1 = 1 - hyper.beta1 ** (t + 1)
            bc2 = 1 - hyper.beta2 ** (t + 1)
            v_hat = v / bc2
            if kind == "adam":
                num = m / bc1
            else:  # nadam: Nesterov-style blend of momentum and raw gradient
                num = (hyper.beta1 * m / (1 - hyper.beta1 ** (t + 2))
                       + (1 - hyper.beta1) * g / bc1)
            delta = -hyper.lr * num / (np.sqrt(v_hat) + hyper.eps)
        traj.append(w, w, obs, math.nan, float(np.linalg.norm(delta)))
        w = w + delta
    traj.wall_time = time.perf_counter() - start
    return traj
