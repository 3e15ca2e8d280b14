"""
Joint training of LSTM weights and RBF hyperparameters against the GP
marginal likelihood, with grid-searched initial hyperparameters and early
stopping on validation MSE.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .gp import CholeskyFactor, NonPSDKernelError, cholesky_jitter, gp_posterior, nlml_and_grad
from .kernels import RbfHyperparams, hyper_and_input_grads, kernel_matrix, static_features
from .lstm import LstmParams, init_lstm, lstm_bptt, lstm_forward

__all__ = [
    "GridSpec",
    "TrainConfig",
    "DeepGpModel",
    "EarlyStopState",
    "TrainingDivergedError",
    "GridExhaustedError",
    "early_stop_update",
    "validation_mse",
    "joint_step",
    "train_joint",
    "grid_search",
    "fit_deep_gp",
]

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch, detail=""):
        super().__init__(f"training diverged at epoch {epoch}{': ' + detail if detail else ''}")
        self.epoch = epoch


class GridExhaustedError(RuntimeError):
    pass


@dataclass
class GridSpec:
    length_scales: list = field(default_factory=lambda: [0.1, 1.0, 10.0])
    signal_vars: list = field(default_factory=lambda: [0.1, 1.0])
    noise_vars: list = field(default_factory=lambda: [0.01, 0.1, 1.0])

    def __post_init__(self):
        for name in ("length_scales", "signal_vars", "noise_vars"):
            vals = [float(v) for v in getattr(self, name)]
            if not vals or any(not v > 0 for v in vals):
                raise ValueError(f"grid {name} must be a non-empty list of positive values")
            setattr(self, name, vals)

    def combinations(self):
        """All (length_scale, signal_var, noise_var) triples, length-scale major."""
        return list(itertools.product(self.length_scales, self.signal_vars, self.noise_vars))


@dataclass
class TrainConfig:
    lstm_learning_rate: float = 1e-3
    hp_learning_rate: float = 1e-2
    momentum: float = 0.9
    max_epochs: int = 150
    patience: int = 10
    grid_epochs: int = 15
    hidden_dim: int = 8
    batch_size: int | None = None  # recorded only; training is full-batch
    mean_loss: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.grid_epochs < 1:
            raise ValueError("max_epochs, grid_epochs and patience must be >= 1")
        if self.lstm_learning_rate < 0 or self.hp_learning_rate < 0:
            raise ValueError("learning rates must be >= 0")


def _unpack_samples(samples):
    if hasattr(samples, "windows"):
        return np.asarray(samples.windows, dtype=float), np.asarray(samples.labels, dtype=float)
    windows, labels = samples
    return np.asarray(windows, dtype=float), np.asarray(labels, dtype=float)


@dataclass
class DeepGpModel:
    """GP whose RBF kernel acts on LSTM read-outs (or flat windows if static).

    `scale` converts normalised errors back to raw return units.
    """

    lstm: LstmParams | None
    rbf: RbfHyperparams
    train_windows: np.ndarray
    train_labels: np.ndarray
    scale: float = 1.0
    factor: CholeskyFactor | None = field(default=None, repr=False)
    train_features: np.ndarray | None = field(default=None, repr=False)
    best_epoch: int = -1
    _tape: object = field(default=None, repr=False)

    def __post_init__(self):
        self.train_windows = np.asarray(self.train_windows, dtype=float)
        self.train_labels = np.asarray(self.train_labels, dtype=float)
        if self.factor is None:
            self.refresh()

    @property
    def static(self):
        return self.lstm is None

    @classmethod
    def initial(cls, train, rbf: RbfHyperparams, cfg: TrainConfig, static=False, scale=1.0):
        windows, labels = _unpack_samples(train)
        lstm = None
        if not static:
            lstm = init_lstm(windows.shape[2], cfg.hidden_dim, np.random.default_rng(cfg.rng_seed))
        return cls(lstm, replace(rbf), windows, labels, scale)

    def features(self, windows):
        windows = np.asarray(windows, dtype=float)
        if self.static:
            return static_features(windows)
        return lstm_forward(windows, self.lstm)[0]

    def refresh(self):
        """Rebuild cached features and Cholesky factor from current parameters."""
        if self.static:
            self.train_features, self._tape = static_features(self.train_windows), None
        else:
            self.train_features, self._tape = lstm_forward(self.train_windows, self.lstm)
        k = kernel_matrix(self.train_features, self.train_features, self.rbf, add_noise_diag=True)
        self.factor = cholesky_jitter(k)

    def predict(self, windows, include_noise=False):
        """Posterior mean and variance in normalised units."""
        f = self.features(windows)
        k_cross = kernel_matrix(f, self.train_features, self.rbf)
        diag = np.full(len(f), self.rbf.signal_var)
        post = gp_posterior(None, k_cross, diag, self.train_labels, factor=self.factor)
        if include_noise:
            return post.mean, post.variance + self.rbf.noise_var
        return post.mean, post.variance

    def nlml(self):
        k = kernel_matrix(self.train_features, self.train_features, self.rbf, add_noise_diag=True)
        return nlml_and_grad(k, self.train_labels)[0]

    def nlml_grads(self):
        """NLML and its gradients w.r.t. log-hyperparameters and LSTM weights."""
        feats, tape = self.train_features, self._tape
        k_sig = kernel_matrix(feats, feats, self.rbf)
        nlml, g = nlml_and_grad(k_sig, self.train_labels, self.rbf.noise_var)
        d_theta, d_feats = hyper_and_input_grads(feats, self.rbf, g, k_signal=k_sig)
        d_lstm = None
        if tape is not None:
            d_lstm = lstm_bptt(tape, d_feats, self.lstm)[0]
        return nlml, d_theta, d_lstm

    def snapshot(self):
        return (None if self.static else self.lstm.copy(), replace(self.rbf))

    def restore(self, snap):
        lstm, rbf = snap
        self.lstm = None if lstm is None else lstm.copy()
        self.rbf = replace(rbf)
        self.refresh()

    def copy(self):
        lstm, rbf = self.snapshot()
        return DeepGpModel(lstm, rbf, self.train_windows, self.train_labels, self.scale,
                           self.factor, self.train_features, self.best_epoch, self._tape)


def validation_mse(model: DeepGpModel, val) -> float:
    """MSE of the posterior mean on `val`, in raw return units."""
    windows, labels = _unpack_samples(val)
    mean, _ = model.predict(windows)
    return float(np.mean((model.scale * (mean - labels)) ** 2))


@dataclass
class EarlyStopState:
    patience: int
    best_mse: float = math.inf
    best_epoch: int = -1
    since_improvement: int = 0
    last_epoch: int = 0
    snapshot: object = None


def early_stop_update(state: EarlyStopState, epoch_val_mse, epoch=None, snapshot=None):
    """Record one validation MSE; return ``(state, stop)``.

    Only a strictly lower MSE counts as improvement. NaN never improves.
    Epochs are numbered from 1 unless given explicitly.
    """
    epoch = state.last_epoch + 1 if epoch is None else epoch
    state.last_epoch = epoch
    if math.isfinite(epoch_val_mse) and epoch_val_mse < state.best_mse:
        state.best_mse = float(epoch_val_mse)
        state.best_epoch = epoch
        state.since_improvement = 0
        state.snapshot = snapshot
    else:
        state.since_improvement += 1
    return state, state.since_improvement >= state.patience


@dataclass
class _Momentum:
    hp: np.ndarray
    lstm: np.ndarray | None


def joint_step(model: DeepGpModel, cfg: TrainConfig, velocity: _Momentum | None = None):
    """One momentum step on the NLML for both parameter groups.

    With ``cfg.mean_loss`` the gradient is divided by the training size.

    Returns ``(nlml_before_step, velocity)``; the model is updated in place.
    """
    nlml, d_theta, d_lstm = model.nlml_grads()
    n = len(model.train_labels) if cfg.mean_loss else 1
    if velocity is None:
        velocity = _Momentum(np.zeros(3), None if model.static else np.zeros(model.lstm.flatten().size))
    if not math.isfinite(nlml) or not np.all(np.isfinite(d_theta)):
        return nlml, velocity
    velocity.hp = cfg.momentum * velocity.hp - cfg.hp_learning_rate * d_theta / n
    model.rbf = RbfHyperparams.from_array(model.rbf.as_array() + velocity.hp)
    if not model.static:
        g = d_lstm.flatten()
        velocity.lstm = cfg.momentum * velocity.lstm - cfg.lstm_learning_rate * g / n
        model.lstm = model.lstm.unflatten(model.lstm.flatten() + velocity.lstm)
    model.refresh()
    return nlml, velocity


def train_joint(model: DeepGpModel, train, val, cfg: TrainConfig,
                evaluate: Callable[[DeepGpModel], float] | None = None):
    """Gradient-train `model` with early stopping on validation MSE.

    `train` must be the data the model was built on. Returns a new model
    holding the best-validation parameters, and the per-epoch history.
    """
    model = model.copy()
    windows, labels = _unpack_samples(train)
    if windows.shape != model.train_windows.shape or not np.array_equal(labels, model.train_labels):
        model = DeepGpModel(model.lstm, model.rbf, windows, labels, model.scale)
    evaluate = evaluate or (lambda m: validation_mse(m, val))
    state = EarlyStopState(cfg.patience)
    early_stop_update(state, evaluate(model), epoch=0, snapshot=model.snapshot())
    history = []
    velocity = None
    for epoch in range(1, cfg.max_epochs + 1):
        try:
            nlml, velocity = joint_step(model, cfg, velocity)
        except NonPSDKernelError as exc:
            raise TrainingDivergedError(epoch, str(exc)) from exc
        if not math.isfinite(nlml):
            raise TrainingDivergedError(epoch, f"non-finite NLML {nlml}")
        val_mse = evaluate(model)
        history.append({"epoch": epoch, "nlml": nlml, "val_mse": val_mse})
        log.debug("epoch=%d nlml=%.6f val_mse=%.6e", epoch, nlml, val_mse)
        state, stop = early_stop_update(state, val_mse, epoch=epoch, snapshot=model.snapshot())
        if stop:
            break
    if state.snapshot is not None:
        model.restore(state.snapshot)
    model.best_epoch = state.best_epoch
    return model, history


def grid_search(grid: GridSpec, train, val, cfg: TrainConfig, static=False, scale=1.0):
    """Pick the initial hyperparameters with the lowest validation MSE.

    Each combination gets a short joint-training run of ``cfg.grid_epochs``.
    Ties keep the earlier combination.
    """
    short = replace(cfg, max_epochs=cfg.grid_epochs)
    table = []
    best = None
    for idx, (ell, sf2, sn2) in enumerate(grid.combinations()):
        hp = RbfHyperparams.from_values(ell, sf2, sn2)
        row = {"index": idx, "length_scale": ell, "signal_var": sf2, "noise_var": sn2}
        try:
            model = DeepGpModel.initial(train, hp, cfg, static=static, scale=scale)
            trained, _ = train_joint(model, train, val, short)
            mse = validation_mse(trained, val)
            row["error"] = ""
        except (NonPSDKernelError, TrainingDivergedError, FloatingPointError) as exc:
            mse = math.nan
            row["error"] = str(exc)
        row["val_mse"] = mse
        table.append(row)
        log.debug("grid combo=%d l=%g sf2=%g sn2=%g val_mse=%.6e", idx, ell, sf2, sn2, mse)
        if math.isfinite(mse) and (best is None or mse < best[0]):
            best = (mse, hp)
    if best is None:
        raise GridExhaustedError(
            "grid exhausted: every combination failed: "
            + "; ".join(f"#{r['index']}: {r['error']}" for r in table)
        )
    return best[1], table


def fit_deep_gp(train, val, grid: GridSpec, cfg: TrainConfig, static=False, scale=1.0):
    """Grid search followed by full joint training from the chosen start."""
    hp, table = grid_search(grid, train, val, cfg, static=static, scale=scale)
    model = DeepGpModel.initial(train, hp, cfg, static=static, scale=scale)
    model, history = train_joint(model, train, val, cfg)
    log.info("trained %s kernel: best_epoch=%d l=%.4g sf2=%.4g sn2=%.4g",
             "static" if static else "deep", model.best_epoch, model.rbf.length_scale,
             model.rbf.signal_var, model.rbf.noise_var)
    return model, {"grid": table, "history": history, "initial_hp": hp}
