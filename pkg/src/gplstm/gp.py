"""
Exact Gaussian-process regression with a zero prior mean.

Everything here works on precomputed kernel blocks, so the same routines
serve the static RBF kernel and the LSTM-warped deep kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotri

__all__ = [
    "NonPSDKernelError",
    "CholeskyFactor",
    "GpPosterior",
    "cholesky_jitter",
    "gp_posterior",
    "nlml_and_grad",
]

JITTER_REL = 1e-8
JITTER_GROWTH = 10.0
JITTER_MAX_TRIES = 6


class NonPSDKernelError(np.linalg.LinAlgError):
    """Raised when a kernel matrix cannot be factorised even with jitter."""


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    jitter: float = 0.0

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b):
        return cho_solve((self.lower, True), b, check_finite=False)

    def inverse(self):
        inv, info = dpotri(self.lower, lower=1)
        if info != 0:
            raise NonPSDKernelError(f"dpotri failed with info={info}")
        inv = np.tril(inv)
        return inv + np.tril(inv, -1).T


@dataclass(frozen=True)
class GpPosterior:
    mean: np.ndarray
    variance: np.ndarray


def cholesky_jitter(a) -> CholeskyFactor:
    """Cholesky factor of `a`, escalating diagonal jitter on failure.

    The first attempt is exact. After that, 1e-8 * trace(a)/n is added to
    the diagonal and multiplied by 10 per retry, at most six times.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n == 0:
        return CholeskyFactor(np.zeros((0, 0)))
    try:
        return CholeskyFactor(np.linalg.cholesky(a))
    except np.linalg.LinAlgError:
        pass
    scale = np.trace(a) / n
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    jitter = JITTER_REL * scale
    for _ in range(JITTER_MAX_TRIES):
        try:
            lower = np.linalg.cholesky(a + jitter * np.eye(n))
            return CholeskyFactor(lower, jitter)
        except np.linalg.LinAlgError:
            jitter *= JITTER_GROWTH
    raise NonPSDKernelError(
        f"non-PSD kernel: {n}x{n} matrix failed Cholesky with final jitter "
        f"{jitter / JITTER_GROWTH:.3e}"
    )


def _noisy(k_train, noise_var):
    k_train = np.asarray(k_train, dtype=float)
    if noise_var < 0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var}")
    if k_train.ndim != 2 or k_train.shape[0] != k_train.shape[1]:
        raise ValueError(f"k_train must be square, got shape {k_train.shape}")
    if noise_var:
        k_train = k_train + noise_var * np.eye(k_train.shape[0])
    return k_train


def gp_posterior(k_train, k_cross, k_test_diag, y_train, noise_var=0.0,
                 factor: CholeskyFactor | None = None) -> GpPosterior:
    """Predictive mean and marginal variance at the test points.

    Parameters
    ----------
    k_train : (n, n) array
        Train/train covariance without the observation noise.
    k_cross : (m, n) array
        Test/train covariance.
    k_test_diag : (m,) array
        Prior variances at the test points.
    y_train : (n,) array
    noise_var : float
        Added to the diagonal of `k_train`.
    factor : CholeskyFactor, optional
        Precomputed factor of ``k_train + noise_var * I``.
    """
    k_test_diag = np.asarray(k_test_diag, dtype=float).reshape(-1)
    y_train = np.asarray(y_train, dtype=float).reshape(-1)
    n = y_train.shape[0]
    m = k_test_diag.shape[0]
    if n == 0:
        return GpPosterior(np.zeros(m), k_test_diag.copy())
    k_cross = np.asarray(k_cross, dtype=float).reshape(m, n)
    if factor is None:
        a = _noisy(k_train, noise_var)
        if a.shape[0] != n:
            raise ValueError("k_train and y_train sizes differ")
        factor = cholesky_jitter(a)
    alpha = factor.solve(y_train)
    mean = k_cross @ alpha
    v = solve_triangular(factor.lower, k_cross.T, lower=True, check_finite=False)
    variance = k_test_diag - np.sum(v * v, axis=0)
    return GpPosterior(mean, np.maximum(variance, 0.0))


def nlml_and_grad(k_train, y_train, noise_var=0.0):
    """Negative log marginal likelihood and its gradient w.r.t. ``A``.

    ``A = k_train + noise_var * I``. The gradient is the dense n x n matrix
    ``0.5 * (A^-1 - alpha alpha^T)`` with ``alpha = A^-1 y``; chain it
    through any parameterisation of the kernel with ``sum(G * dA)``.
    """
    y = np.asarray(y_train, dtype=float).reshape(-1)
    a = _noisy(k_train, noise_var)
    n = y.shape[0]
    if n < 1 or a.shape[0] != n:
        raise ValueError("need n >= 1 and matching k_train/y_train sizes")
    factor = cholesky_jitter(a)
    alpha = factor.solve(y)
    nlml = 0.5 * y @ alpha + 0.5 * factor.log_det + 0.5 * n * np.log(2 * np.pi)
    a_inv = factor.inverse()
    grad = 0.5 * (a_inv - np.outer(alpha, alpha))
    return float(nlml), grad
