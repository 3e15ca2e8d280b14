"""
Isotropic RBF kernel, its analytic gradients, and the deep-kernel wrapper
that evaluates the RBF on LSTM read-outs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lstm import LstmParams, lstm_forward

__all__ = [
    "RbfHyperparams",
    "DeepKernelConfig",
    "KernelGrads",
    "rbf_eval",
    "kernel_matrix",
    "kernel_grads",
    "sq_dists",
    "hyper_and_input_grads",
    "deep_kernel_matrix",
    "static_features",
]


@dataclass
class RbfHyperparams:
    """Length scale, signal variance and noise variance, stored as logs."""

    log_length_scale: float = 0.0
    log_signal_var: float = 0.0
    log_noise_var: float = np.log(0.1)

    @classmethod
    def from_values(cls, length_scale, signal_var, noise_var):
        for name, v in (("length_scale", length_scale), ("signal_var", signal_var),
                        ("noise_var", noise_var)):
            if not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")
        return cls(float(np.log(length_scale)), float(np.log(signal_var)),
                   float(np.log(noise_var)))

    @property
    def length_scale(self):
        return float(np.exp(self.log_length_scale))

    @property
    def signal_var(self):
        return float(np.exp(self.log_signal_var))

    @property
    def noise_var(self):
        return float(np.exp(self.log_noise_var))

    def as_array(self):
        return np.array([self.log_length_scale, self.log_signal_var, self.log_noise_var])

    @classmethod
    def from_array(cls, theta):
        return cls(*(float(t) for t in theta))


@dataclass
class DeepKernelConfig:
    lstm: LstmParams
    rbf: RbfHyperparams = field(default_factory=RbfHyperparams)

    @property
    def feature_dim(self):
        return self.lstm.hidden_dim


@dataclass
class KernelGrads:
    """Derivatives of a square RBF kernel matrix.

    ``d_inputs[i, j]`` holds dK_ij/dx_i; by symmetry dK_ij/dx_j is its
    negative, and no other row of X affects K_ij.
    """

    d_log_length_scale: np.ndarray
    d_log_signal_var: np.ndarray
    d_log_noise_var: np.ndarray
    d_inputs: np.ndarray

    def contract_inputs(self, g):
        """Gradient w.r.t. X of ``sum(g * K)`` for an n x n weight matrix."""
        g = np.asarray(g, dtype=float)
        return np.einsum("ij,ijd->id", g, self.d_inputs) - np.einsum(
            "ij,ijd->jd", g, self.d_inputs
        )


def _as_2d(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError(f"{name} must be a list of vectors")
    return x


def sq_dists(xa, xb):
    """Pairwise squared Euclidean distances, clipped at zero."""
    xa = _as_2d(xa, "X_a")
    xb = _as_2d(xb, "X_b")
    if xa.shape[1] != xb.shape[1]:
        raise ValueError(f"dimension mismatch: {xa.shape[1]} vs {xb.shape[1]}")
    d = (
        np.sum(xa * xa, axis=1)[:, None]
        + np.sum(xb * xb, axis=1)[None, :]
        - 2.0 * xa @ xb.T
    )
    return np.maximum(d, 0.0)


def rbf_eval(x_i, x_j, hp: RbfHyperparams, same_index=False):
    x_i = np.asarray(x_i, dtype=float).reshape(-1)
    x_j = np.asarray(x_j, dtype=float).reshape(-1)
    if x_i.shape != x_j.shape:
        raise ValueError(f"dimension mismatch: {x_i.shape} vs {x_j.shape}")
    diff = x_i - x_j
    k = hp.signal_var * np.exp(-(diff @ diff) / (2.0 * hp.length_scale ** 2))
    if same_index:
        k += hp.noise_var
    return float(k)


def kernel_matrix(xa, xb, hp: RbfHyperparams, add_noise_diag=False):
    """RBF covariance between two point sets.

    The noise term lands on the diagonal only when `add_noise_diag` is set
    and the block is square; cross blocks never carry it.
    """
    xa = _as_2d(xa, "X_a")
    xb = _as_2d(xb, "X_b")
    if len(xa) == 0 or len(xb) == 0:
        raise ValueError("input lists must be non-empty")
    d2 = sq_dists(xa, xb)
    if xa is xb or (xa.shape == xb.shape and np.array_equal(xa, xb)):
        d2 = 0.5 * (d2 + d2.T)
        np.fill_diagonal(d2, 0.0)
    k = hp.signal_var * np.exp(-d2 / (2.0 * hp.length_scale ** 2))
    if add_noise_diag:
        if k.shape[0] != k.shape[1]:
            raise ValueError("noise diagonal needs a square block")
        k[np.diag_indices_from(k)] += hp.noise_var
    return k


def kernel_grads(x, hp: RbfHyperparams) -> KernelGrads:
    """Analytic derivatives of ``kernel_matrix(x, x, hp, True)``."""
    x = _as_2d(x, "X")
    if len(x) == 0:
        raise ValueError("X must be non-empty")
    ell2 = hp.length_scale ** 2
    d2 = sq_dists(x, x)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    k_sig = hp.signal_var * np.exp(-d2 / (2.0 * ell2))
    diff = x[:, None, :] - x[None, :, :]
    return KernelGrads(
        d_log_length_scale=k_sig * d2 / ell2,
        d_log_signal_var=k_sig,
        d_log_noise_var=hp.noise_var * np.eye(len(x)),
        d_inputs=-(k_sig / ell2)[:, :, None] * diff,
    )


def hyper_and_input_grads(x, hp: RbfHyperparams, g, k_signal=None):
    """Contract an upstream gradient ``g = dL/dK`` through the RBF kernel.

    Returns ``(dL/d log-hyperparameters, dL/dX)`` without materialising the
    (n, n, d) input-derivative tensor.
    """
    x = _as_2d(x, "X")
    g = np.asarray(g, dtype=float)
    ell2 = hp.length_scale ** 2
    d2 = sq_dists(x, x)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    if k_signal is None:
        k_signal = hp.signal_var * np.exp(-d2 / (2.0 * ell2))
    gk = g * k_signal
    d_theta = np.array([
        np.sum(gk * d2) / ell2,
        np.sum(gk),
        hp.noise_var * np.trace(g),
    ])
    gs = gk + gk.T
    d_x = -(gs.sum(axis=1)[:, None] * x - gs @ x) / ell2
    return d_theta, d_x


def static_features(windows):
    """Flatten (n, T, D) windows into (n, T*D) vectors, oldest step first."""
    w = np.asarray(windows, dtype=float)
    return w.reshape(w.shape[0], -1)


def deep_kernel_matrix(windows, cfg: DeepKernelConfig, window_len=20, add_noise_diag=True):
    """Kernel over the final LSTM hidden states of each window.

    Returns the kernel and ``(features, tape)`` so callers can backprop
    through the LSTM.
    """
    w = np.asarray(windows, dtype=float)
    if w.ndim != 3 or w.shape[1] != window_len or w.shape[2] != cfg.lstm.input_dim:
        raise ValueError(
            f"expected windows of shape (n, {window_len}, {cfg.lstm.input_dim}), got {w.shape}"
        )
    feats, tape = lstm_forward(w, cfg.lstm)
    k = kernel_matrix(feats, feats, cfg.rbf, add_noise_diag=add_noise_diag)
    return k, (feats, tape)
