"""Shared oracles for the test suite.

The dense-conditioning oracle below is the independent reference for every
BLUE-style prediction: it builds the full joint covariance of the observed
scalars (noise on the diagonal, unpivoted Cholesky with jitter 1e-10 C(0),
the same policy as the simulator) and solves it directly.
"""

import numpy as np

from rfd import IsotropicModel, NoiseSpec, cov_blocks, sqc_eval


def dense_conditioning(model: IsotropicModel, noise: NoiseSpec,
                       d: np.ndarray, loss_centered: float,
                       grad: np.ndarray) -> tuple[float, float]:
    """Conditional mean of the centered value at displacement d, and its
    conditional variance, via a dense joint-covariance solve."""
    d = np.asarray(d, dtype=float)
    dim = d.size
    c0 = sqc_eval(model, 0.0, 0)
    own = cov_blocks(model, np.zeros(dim), np.zeros(dim))
    K = np.zeros((dim + 1, dim + 1))
    K[0, 0] = own.vv + noise.value_var
    K[1:, 1:] = own.gg + noise.grad_var * np.eye(dim)

    w = np.zeros(dim)  # observation point; the target sits at w + d
    blocks = cov_blocks(model, w, w + d)
    # Cov(L(w+d), [L(w), grad L(w)]); gv of (w, w+d) is already the
    # gradient-at-w against value-at-w+d block
    k = np.concatenate([[blocks.vv], blocks.gv])

    jitter = 1e-10 * c0
    chol = np.linalg.cholesky(K + jitter * np.eye(dim + 1))
    x = np.linalg.solve(chol.T, np.linalg.solve(chol, k))
    obs = np.concatenate([[loss_centered], np.asarray(grad, dtype=float)])
    return float(x @ obs), float(c0 - k @ x)


def covariance_models():
    """One representative of each covariance kind (unit variance and scale)."""
    return [
        IsotropicModel.squared_exponential(),
        IsotropicModel.matern(1),
        IsotropicModel.matern(2),
        IsotropicModel.rational_quadratic(2.0),
    ]


def joint_covariance(model: IsotropicModel, points) -> np.ndarray:
    """Analytic covariance of the stacked (value, gradient) scalars."""
    dim = points[0].size
    k = dim + 1
    n = len(points)
    K = np.zeros((n * k, n * k))
    for i, p in enumerate(points):
        for j, q in enumerate(points):
            b = cov_blocks(model, p, q)
            K[i * k, j * k] = b.vv
            K[i * k + 1:(i + 1) * k, j * k] = b.gv
            K[i * k, j * k + 1:(j + 1) * k] = -b.gv
            K[i * k + 1:(i + 1) * k, j * k + 1:(j + 1) * k] = b.gg
    return K
