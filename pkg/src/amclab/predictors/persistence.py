"""Save and restore fitted predictors as AMCK checkpoints with metadata."""

from __future__ import annotations

import numpy as np

from amclab.nn import CheckpointError, decode_checkpoint, encode_checkpoint, load_into
from amclab.predictors.estimators import (
    NORMALIZATION_VERSION,
    NoPredictor,
    RecurrentPredictor,
    SinrTransformerPredictor,
)

KINDS = {
    NoPredictor.kind: NoPredictor,
    SinrTransformerPredictor.kind: SinrTransformerPredictor,
    RecurrentPredictor.kind: RecurrentPredictor,
}


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    if isinstance(value, np.generic):
        return value.item()
    return value


def predictor_metadata(predictor, config_digest=""):
    return {
        "kind": predictor.kind,
        "params": {k: _jsonable(v) for k, v in predictor.get_params().items()},
        "L": int(predictor.history_length_),
        "K": int(predictor.n_subcarriers_),
        "normalization_version": NORMALIZATION_VERSION,
        "config_digest": config_digest,
        "loss_curve": [float(v) for v in getattr(predictor, "loss_curve_", [])],
        "val_curve": [float(v) for v in getattr(predictor, "val_curve_", [])],
        "best_epoch": int(getattr(predictor, "best_epoch_", -1)),
    }


def encode_predictor(predictor, config_digest=""):
    meta = predictor_metadata(predictor, config_digest)
    named = predictor.network_.named_parameters() if hasattr(predictor, "network_") else []
    return encode_checkpoint(named, meta)


def decode_predictor(blob, L=None, K=None):
    """Rebuild a predictor from checkpoint bytes; optional L/K must match."""
    meta, tensors = decode_checkpoint(blob)
    kind = meta.get("kind")
    if kind not in KINDS:
        raise CheckpointError(f"unknown predictor kind {kind!r}")
    if meta.get("normalization_version") != NORMALIZATION_VERSION:
        raise CheckpointError(
            f"normalization version mismatch: expected {NORMALIZATION_VERSION}, "
            f"got {meta.get('normalization_version')}"
        )
    if L is not None and L != meta["L"]:
        raise ValueError(f"history length mismatch: expected L={meta['L']}, got L={L}")
    if K is not None and K != meta["K"]:
        raise ValueError(f"subcarrier count mismatch: expected K={meta['K']}, got K={K}")
    params = dict(meta["params"])
    if "betas" in params:
        params["betas"] = tuple(params["betas"])
    if "noise_snr_range" in params and params["noise_snr_range"] is not None:
        params["noise_snr_range"] = tuple(params["noise_snr_range"])
    est = KINDS[kind](**params)
    if kind == NoPredictor.kind:
        est.history_length_, est.n_subcarriers_ = meta["L"], meta["K"]
    else:
        est.initialize(meta["L"], meta["K"])
        load_into(est.network_, tensors)
        est.loss_curve_ = list(meta.get("loss_curve", []))
        est.val_curve_ = list(meta.get("val_curve", []))
        est.best_epoch_ = meta.get("best_epoch", -1)
    est.config_digest_ = meta.get("config_digest", "")
    return est


def save_predictor(path, predictor, config_digest=""):
    with open(path, "wb") as fh:
        fh.write(encode_predictor(predictor, config_digest))


def load_predictor(path, L=None, K=None):
    with open(path, "rb") as fh:
        return decode_predictor(fh.read(), L=L, K=K)
