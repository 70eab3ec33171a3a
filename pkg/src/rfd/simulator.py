"""Incremental sampling of a differentiable Gaussian random function.

Each evaluation appends dim+1 scalars (the value first, then the gradient
components in ascending coordinate order) to one growing joint Gaussian
system.  The lower-triangular factor of the joint covariance is extended in
place, so all draws are mutually consistent: re-querying a visited point
reproduces the stored scalars and nearby points are strongly correlated.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .covariance import IsotropicModel, UnboundedDerivative, cov_blocks, sqc_eval
from .estimators import NoiseSpec

__all__ = ["GrfSampler", "DegenerateCovariance"]


class DegenerateCovariance(RuntimeError):
    """The joint covariance lost positive definiteness beyond jitter repair."""


def _cross_block(model, p, w, dim):
    """Covariance of (value, gradient) scalars at p against those at w."""
    blocks = cov_blocks(model, p, w)
    out = np.empty((dim + 1, dim + 1))
    out[0, 0] = blocks.vv
    out[1:, 0] = blocks.gv       # Cov(grad(p), value(w)) = 2 C' (p - w)
    out[0, 1:] = -blocks.gv      # Cov(value(p), grad(w)) flips the sign
    out[1:, 1:] = blocks.gg
    return out


class GrfSampler:
    """Mutable state of an incrementally sampled Gaussian random function.

    Single-writer: evaluations mutate the factor and must be externally
    serialized; distinct instances (distinct seeds) are independent.
    """

    def __init__(self, model: IsotropicModel, dim: int, seed: int,
                 jitter: float | None = None, mean: float = 0.0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if not model.is_covariance:
            raise ValueError("simulation needs a covariance kind")
        try:
            sqc_eval(model, 0.0, 2)
        except UnboundedDerivative as exc:
            raise ValueError(
                "gradient process variance undefined at 0 for this model; "
                "its sample paths are not smooth enough to simulate jointly "
                "with gradients") from exc
        c0 = sqc_eval(model, 0.0, 0)
        self.model = model
        self.dim = dim
        self.mean = mean
        self.jitter = 1e-10 * c0 if jitter is None else float(jitter)
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        self.rng_seed = seed
        self._rng = np.random.default_rng(seed)
        self._points: list[np.ndarray] = []
        self._cache: dict[tuple, tuple[float, np.ndarray]] = {}
        k = dim + 1
        self._capacity = 16 * k
        self._factor = np.zeros((self._capacity, self._capacity))
        self._draws = np.zeros(self._capacity)
        self._values = np.zeros(self._capacity)
        self._rows = 0

    @property
    def points(self) -> list[np.ndarray]:
        return [p.copy() for p in self._points]

    @property
    def factor_rows(self) -> int:
        return self._rows

    @property
    def factor(self) -> np.ndarray:
        return self._factor[:self._rows, :self._rows].copy()

    @property
    def draws(self) -> np.ndarray:
        return self._draws[:self._rows].copy()

    def _grow(self, needed: int):
        if needed <= self._capacity:
            return
        new_cap = self._capacity
        while new_cap < needed:
            new_cap *= 2
        factor = np.zeros((new_cap, new_cap))
        factor[:self._rows, :self._rows] = self._factor[:self._rows, :self._rows]
        self._factor = factor
        for name in ("_draws", "_values"):
            grown = np.zeros(new_cap)
            grown[:self._rows] = getattr(self, name)[:self._rows]
            setattr(self, name, grown)
        self._capacity = new_cap

    def eval(self, w) -> tuple[float, np.ndarray]:
        """Draw (value, gradient) at w, consistent with all previous draws.

        Exact coordinate repeats short-circuit to the stored scalars;
        near-duplicates go through the conditional draw, whose variance is
        naturally tiny.
        """
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ValueError(f"point must have dimension {self.dim}")
        key = tuple(w.tolist())
        hit = self._cache.get(key)
        if hit is not None:
            value, grad = hit
            return value, grad.copy()

        k = self.dim + 1
        m = self._rows
        self._grow(m + k)

        own = _cross_block(self.model, w, w, self.dim)
        if m > 0:
            cross = np.empty((m, k))
            for i, p in enumerate(self._points):
                cross[i * k:(i + 1) * k, :] = _cross_block(self.model, p, w,
                                                           self.dim)
            ytrans = solve_triangular(self._factor[:m, :m], cross, lower=True)
            schur = own - ytrans.T @ ytrans
            cond_mean = ytrans.T @ self._draws[:m]
        else:
            ytrans = None
            schur = own
            cond_mean = np.zeros(k)

        schur[np.diag_indices_from(schur)] += self.jitter
        try:
            chol = np.linalg.cholesky(schur)
        except np.linalg.LinAlgError as exc:
            nearest = min(self._points,
                          key=lambda p: float(np.sum((p - w) ** 2)),
                          default=None)
            raise DegenerateCovariance(
                f"covariance degeneracy extending to point {w.tolist()}"
                + (f", nearest previous point {nearest.tolist()}"
                   if nearest is not None else "")) from exc

        z = self._rng.standard_normal(k)
        scalars = cond_mean + chol @ z
        scalars[0] += self.mean

        if ytrans is not None:
            self._factor[m:m + k, :m] = ytrans.T
        self._factor[m:m + k, m:m + k] = chol
        self._draws[m:m + k] = z
        self._values[m:m + k] = scalars
        self._rows = m + k
        self._points.append(w.copy())

        value = float(scalars[0])
        grad = scalars[1:].copy()
        self._cache[key] = (value, grad)
        return value, grad.copy()

    def eval_noisy(self, w, noise: NoiseSpec,
                   rng: np.random.Generator) -> tuple[float, np.ndarray]:
        """Noisy view of eval(); the noiseless truth stays cached so that
        trajectories can log the true loss by re-querying the same point."""
        value, grad = self.eval(w)
        if noise.value_var > 0:
            value += np.sqrt(noise.value_var) * rng.standard_normal()
        if noise.grad_var > 0:
            grad = grad + np.sqrt(noise.grad_var) * rng.standard_normal(self.dim)
        return value, grad
