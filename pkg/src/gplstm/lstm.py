"""
Single-layer LSTM: batched forward pass and backpropagation through time.

Gate rows are stacked in the order input, forget, candidate, output, so
``W[k*H:(k+1)*H]`` belongs to gate ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LstmParams", "LstmTape", "GATES", "init_lstm", "lstm_forward", "lstm_bptt"]

GATES = ("input", "forget", "candidate", "output")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LstmParams:
    W: np.ndarray  # (4H, D) input weights
    U: np.ndarray  # (4H, H) recurrent weights
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        h = self.hidden_dim
        if self.W.shape[0] != 4 * h or self.U.shape != (4 * h, h) or self.b.shape != (4 * h,):
            raise ValueError(
                f"inconsistent LSTM shapes W={self.W.shape} U={self.U.shape} b={self.b.shape}"
            )

    @property
    def hidden_dim(self):
        return self.U.shape[1]

    @property
    def input_dim(self):
        return self.W.shape[1]

    @classmethod
    def zeros(cls, input_dim=2, hidden_dim=8):
        h = hidden_dim
        return cls(np.zeros((4 * h, input_dim)), np.zeros((4 * h, h)), np.zeros(4 * h))

    def gate(self, name):
        k = GATES.index(name)
        h = self.hidden_dim
        sl = slice(k * h, (k + 1) * h)
        return self.W[sl], self.U[sl], self.b[sl]

    def flatten(self):
        return np.concatenate([self.W.ravel(), self.U.ravel(), self.b])

    def unflatten(self, theta):
        theta = np.asarray(theta, dtype=float)
        nw, nu = self.W.size, self.U.size
        return LstmParams(
            theta[:nw].reshape(self.W.shape),
            theta[nw:nw + nu].reshape(self.U.shape),
            theta[nw + nu:].copy(),
        )

    def copy(self):
        return LstmParams(self.W.copy(), self.U.copy(), self.b.copy())


@dataclass
class LstmTape:
    x: np.ndarray       # (B, T, D)
    gates: np.ndarray   # (T, B, 4H) post-activation
    c: np.ndarray       # (T+1, B, H), c[0] = 0
    h: np.ndarray       # (T+1, B, H), h[0] = 0
    param_shapes: tuple


def init_lstm(input_dim=2, hidden_dim=8, rng=None, forget_bias=1.0):
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias +1."""
    rng = np.random.default_rng(rng)
    h = hidden_dim
    bound = 1.0 / np.sqrt(h)
    W = rng.uniform(-bound, bound, size=(4 * h, input_dim))
    U = rng.uniform(-bound, bound, size=(4 * h, h))
    b = np.zeros(4 * h)
    b[h:2 * h] = forget_bias
    return LstmParams(W, U, b)


def _batch(sequence, input_dim):
    x = np.asarray(sequence, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != input_dim:
        raise ValueError(f"expected steps of dimension {input_dim}, got shape {x.shape}")
    if x.shape[1] < 1:
        raise ValueError("sequence length must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite value in LSTM input")
    return x, single


def lstm_forward(sequence, params: LstmParams):
    """Run the LSTM from zero state and return the final hidden state.

    `sequence` is (T, D) for one window or (B, T, D) for a batch; the
    returned hidden state is (H,) or (B, H) to match.
    """
    x, single = _batch(sequence, params.input_dim)
    B, T, _ = x.shape
    H = params.hidden_dim
    gates = np.empty((T, B, 4 * H))
    c = np.zeros((T + 1, B, H))
    h = np.zeros((T + 1, B, H))
    xw = x @ params.W.T + params.b  # (B, T, 4H)
    for t in range(T):
        z = xw[:, t] + h[t] @ params.U.T
        a = gates[t]
        a[:, :2 * H] = _sigmoid(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
        c[t + 1] = a[:, H:2 * H] * c[t] + a[:, :H] * a[:, 2 * H:3 * H]
        h[t + 1] = a[:, 3 * H:] * np.tanh(c[t + 1])
    tape = LstmTape(x, gates, c, h, (params.W.shape, params.U.shape))
    out = h[T].copy()
    return (out[0] if single else out), tape


def lstm_bptt(tape: LstmTape, grad_output, params: LstmParams):
    """Reverse-mode gradients of ``<grad_output, h_T>``.

    Returns ``(grad_params, grad_inputs)`` where `grad_params` is an
    LstmParams holding dW, dU, db and `grad_inputs` has the input's shape.
    """
    if tape.param_shapes != (params.W.shape, params.U.shape):
        raise ValueError("tape was recorded with differently shaped parameters")
    x = tape.x
    B, T, _ = x.shape
    H = params.hidden_dim
    dh = np.asarray(grad_output, dtype=float).reshape(B, H).copy()
    dc = np.zeros((B, H))
    dz_all = np.empty((T, B, 4 * H))
    for t in range(T - 1, -1, -1):
        a = tape.gates[t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        tc = np.tanh(tape.c[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dz_all[t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * tape.c[t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dh = dz @ params.U
        dc = dc * f
    dz_flat = dz_all.reshape(T * B, 4 * H)
    x_tb = x.transpose(1, 0, 2).reshape(T * B, -1)
    dW = dz_flat.T @ x_tb
    dU = dz_flat.T @ tape.h[:-1].reshape(T * B, H)
    db = dz_flat.sum(axis=0)
    dx = (dz_all @ params.W).transpose(1, 0, 2)
    if np.ndim(grad_output) == 1 and B == 1:
        dx = dx[0]
    return LstmParams(dW, dU, db), dx
