"""Predictors as scikit-learn style estimators.

All estimators take SINR histories in dB shaped (n_samples, L, K) and
return next-report predictions in dB shaped (n_samples, K).
"""

from __future__ import annotations

import copy
import logging

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from amclab.nn import Adam, StackedRecurrent, FullyConnected, Module, Tensor, no_grad
from amclab.predictors.core import denormalize, nmse, normalize, patchify, to_nmse_db
from amclab.predictors.network import ModelConfig, SinrPredictionNetwork

log = logging.getLogger(__name__)

NORMALIZATION_VERSION = 1


def check_histories(X, L=None, K=None):
    """Validate a history batch; a single (L, K) window is promoted to a batch of one."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"histories must be (n_samples, L, K), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("histories contain non-finite values")
    if L is not None and X.shape[1] != L:
        raise ValueError(f"history length mismatch: expected L={L}, got L={X.shape[1]}")
    if K is not None and X.shape[2] != K:
        raise ValueError(f"subcarrier count mismatch: expected K={K}, got K={X.shape[2]}")
    return X


def check_targets(y, X):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None]
    if y.shape != (X.shape[0], X.shape[2]):
        raise ValueError(f"targets must be shape {(X.shape[0], X.shape[2])}, got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    return y


def measurement_noise(history, snr_db, rng):
    """Gaussian noise with variance = per-sample history variance / linear SNR."""
    var = history.reshape(len(history), -1).var(axis=1)
    sd = np.sqrt(var / 10.0 ** (np.asarray(snr_db, float) / 10.0))
    return history + sd[:, None, None] * rng.standard_normal(history.shape)


class BasePredictor(RegressorMixin, BaseEstimator):
    kind = "base"

    def score(self, X, y, sample_weight=None):
        """Negative NMSE in dB (higher is better)."""
        return -to_nmse_db(nmse(self.predict(X), y))


class NoPredictor(BasePredictor):
    """Reuses the most recent measurement as the forecast."""

    kind = "np"

    def fit(self, X, y=None, **fit_params):
        X = check_histories(X)
        self.history_length_, self.n_subcarriers_ = X.shape[1:]
        return self

    def predict(self, X):
        X = check_histories(X)
        return X[:, -1, :].copy()


class _NeuralPredictor(BasePredictor):
    """Shared training loop: Adam on batch-mean NMSE in dB with noise augmentation."""

    def _build(self, L, K, rng):
        raise NotImplementedError

    def _forward(self, x_norm):
        raise NotImplementedError

    def _predict_normalized(self, X):
        x_norm, mu, sigma = normalize(X)
        with no_grad():
            out = self._forward(x_norm).data
        return denormalize(out, mu, sigma)

    def _loss(self, X, y):
        x_norm, mu, sigma = normalize(X)
        out = self._forward(x_norm)
        pred = out * sigma[:, None] + mu[:, None]
        err = pred - y
        denom = (y**2).sum(axis=1)
        return ((err * err).sum(axis=1) * (1.0 / denom)).mean()

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_histories(X)
        y = check_targets(y, X)
        rng = np.random.default_rng(self.random_state)
        self.history_length_, self.n_subcarriers_ = X.shape[1:]
        self.network_ = self._build(X.shape[1], X.shape[2], rng)
        self.loss_curve_ = []
        self.val_curve_ = []
        self.best_epoch_ = -1
        if X_val is not None:
            X_val = check_histories(X_val, *X.shape[1:])
            y_val = check_targets(y_val, X_val)
        opt = Adam(self.network_, lr=self.lr, betas=tuple(self.betas))
        best_val = np.inf
        best_state = None
        n = len(X)
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            total = 0.0
            for bi, start in enumerate(range(0, n, self.batch_size)):
                idx = order[start : start + self.batch_size]
                xb = X[idx]
                if self.noise_snr_range is not None:
                    lo, hi = self.noise_snr_range
                    xb = measurement_noise(xb, rng.uniform(lo, hi, len(idx)), rng)
                opt.zero_grad()
                loss = self._loss(xb, y[idx])
                value = float(loss.data)
                if not np.isfinite(value):
                    raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {bi}")
                loss.backward()
                opt.step()
                total += value * len(idx)
            self.loss_curve_.append(total / n)
            if X_val is not None:
                val = nmse(self._predict_normalized(X_val), y_val)
                self.val_curve_.append(val)
                if val < best_val:
                    best_val = val
                    self.best_epoch_ = epoch
                    best_state = [p.data.copy() for p in self.network_.parameters()]
            if self.verbose:
                log.info(
                    "epoch=%d train_nmse_db=%.3f val_nmse_db=%s", epoch,
                    to_nmse_db(self.loss_curve_[-1]),
                    f"{to_nmse_db(self.val_curve_[-1]):.3f}" if self.val_curve_ else "na",
                )
        if best_state is not None:
            for p, data in zip(self.network_.parameters(), best_state):
                p.data = data
        self.network_.zero_grad()
        return self

    def predict(self, X, batch_size=2048):
        check_is_fitted(self, "network_")
        X = check_histories(X, self.history_length_, self.n_subcarriers_)
        out = [self._predict_normalized(X[i : i + batch_size]) for i in range(0, len(X), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.n_subcarriers_))

    def parameter_counts(self):
        check_is_fitted(self, "network_")
        return {
            "total": self.network_.num_parameters(),
            "trainable": self.network_.num_parameters(trainable_only=True),
        }


class SinrTransformerPredictor(_NeuralPredictor):
    """Normalize -> patch -> SINR attention -> embed -> backbone -> head -> denormalize."""

    kind = "transformer"

    def __init__(
        self,
        patch_size=4,
        n_attention=4,
        d_model=64,
        n_layers=2,
        n_heads=4,
        backbone="tiny-transformer",
        freeze_policy="ln-only",
        se_reduction=2,
        epochs=50,
        batch_size=64,
        lr=1e-3,
        betas=(0.9, 0.999),
        noise_snr_range=(15.0, 25.0),
        random_state=0,
        verbose=0,
    ):
        self.patch_size = patch_size
        self.n_attention = n_attention
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.backbone = backbone
        self.freeze_policy = freeze_policy
        self.se_reduction = se_reduction
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.betas = betas
        self.noise_snr_range = noise_snr_range
        self.random_state = random_state
        self.verbose = verbose

    def model_config(self):
        return ModelConfig(
            N=self.patch_size, N_SA=self.n_attention, d_model=self.d_model,
            N_LLM=self.n_layers, n_heads=self.n_heads, backbone_kind=self.backbone,
            freeze_policy=self.freeze_policy, se_reduction=self.se_reduction,
        )

    def _build(self, L, K, rng):
        return SinrPredictionNetwork(self.model_config(), L, K, rng=rng)

    def _forward(self, x_norm):
        return self.network_(Tensor(patchify(x_norm, self.patch_size)))

    def initialize(self, L, K):
        """Build an untrained network (what ``fit`` starts from)."""
        self.history_length_, self.n_subcarriers_ = L, K
        self.network_ = self._build(L, K, np.random.default_rng(self.random_state))
        self.loss_curve_, self.val_curve_ = [], []
        return self


class _RecurrentNetwork(Module):
    def __init__(self, cell, K, hidden_size, num_layers, rng):
        self.rnn = StackedRecurrent(cell, K, hidden_size, num_layers, rng=rng)
        self.out = FullyConnected(hidden_size, K, rng=rng)

    def forward(self, x):
        return self.out(self.rnn(x))


class RecurrentPredictor(_NeuralPredictor):
    """Stacked RNN/LSTM/GRU over the L history rows, final FC to K subcarriers."""

    kind = "recurrent"

    def __init__(
        self,
        cell="lstm",
        hidden_size=128,
        num_layers=4,
        epochs=50,
        batch_size=64,
        lr=1e-3,
        betas=(0.9, 0.999),
        noise_snr_range=(15.0, 25.0),
        random_state=0,
        verbose=0,
    ):
        self.cell = cell
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.betas = betas
        self.noise_snr_range = noise_snr_range
        self.random_state = random_state
        self.verbose = verbose

    def _build(self, L, K, rng):
        return _RecurrentNetwork(self.cell, K, self.hidden_size, self.num_layers, rng)

    def _forward(self, x_norm):
        return self.network_(Tensor(x_norm))

    def initialize(self, L, K):
        self.history_length_, self.n_subcarriers_ = L, K
        self.network_ = self._build(L, K, np.random.default_rng(self.random_state))
        self.loss_curve_, self.val_curve_ = [], []
        return self


def clone_fitted(estimator):
    return copy.deepcopy(estimator)
