"""Array-level pieces shared by every predictor: normalization, patching, NMSE."""

from __future__ import annotations

import numpy as np

SIGMA_FLOOR = 1e-6
NMSE_DB_FLOOR = -100.0


def normalize(history):
    """Standardize each L x K window by its own mean and standard deviation.

    Accepts (L, K) or a batch (B, L, K); ``mu``/``sigma`` are scalars or (B,).
    """
    x = np.asarray(history, dtype=float)
    axes = (-2, -1)
    mu = x.mean(axis=axes)
    sigma = np.maximum(x.std(axis=axes), SIGMA_FLOOR)
    out = (x - np.expand_dims(mu, axes)) / np.expand_dims(sigma, axes)
    return out, mu, sigma


def denormalize(x, mu, sigma):
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    extra = x.ndim - mu.ndim
    shape = mu.shape + (1,) * extra
    return x * sigma.reshape(shape) + mu.reshape(shape)


def patch_count(L, N):
    if N < 1:
        raise ValueError(f"patch size must be >= 1, got {N}")
    return -(-L // N)


def patchify(x, N):
    """Split the time axis into ceil(L/N) blocks of N rows, zero-padding the tail.

    (L, K) -> (L', N, K) and (B, L, K) -> (B, L', N, K).
    """
    x = np.asarray(x, dtype=float)
    L = x.shape[-2]
    n_blocks = patch_count(L, N)
    pad = n_blocks * N - L
    if pad:
        widths = [(0, 0)] * x.ndim
        widths[-2] = (0, pad)
        x = np.pad(x, widths)
    return x.reshape(x.shape[:-2] + (n_blocks, N, x.shape[-1]))


def positional_encoding(positions, d_model):
    """Sin-cos table (positions, d_model): sin on even dims, cos on odd dims."""
    pos = np.arange(positions, dtype=float)[:, None]
    i2 = np.arange(0, d_model, 2, dtype=float)
    angle = pos / 10000.0 ** (i2 / d_model)
    pe = np.zeros((positions, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


def nmse(pred, truth):
    """Per-sample ||pred - truth||^2 / ||truth||^2 over the last axis (mean over a batch)."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    denom = (truth**2).sum(axis=-1)
    if np.any(denom == 0):
        raise ValueError("NMSE undefined for an all-zero truth vector")
    return float(np.mean(((pred - truth) ** 2).sum(axis=-1) / denom))


def to_nmse_db(value):
    if value <= 0:
        return NMSE_DB_FLOOR
    return max(10.0 * np.log10(value), NMSE_DB_FLOOR)


def nmse_db(pred, truth):
    return to_nmse_db(nmse(pred, truth))
