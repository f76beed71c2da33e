"""SINR predictors: last-value baseline, recurrent baselines and the patch transformer."""

from amclab.predictors.core import (
    denormalize,
    nmse,
    nmse_db,
    normalize,
    patch_count,
    patchify,
    positional_encoding,
    to_nmse_db,
)
from amclab.predictors.estimators import (
    NORMALIZATION_VERSION,
    BasePredictor,
    NoPredictor,
    RecurrentPredictor,
    SinrTransformerPredictor,
    check_histories,
    check_targets,
    measurement_noise,
)
from amclab.predictors.network import (
    BACKBONES,
    FREEZE_POLICIES,
    ModelConfig,
    SinrPredictionNetwork,
    apply_freeze_policy,
    layernorm_parameter_count,
    sinr_attention,
)
from amclab.predictors.persistence import (
    KINDS,
    decode_predictor,
    encode_predictor,
    load_predictor,
    save_predictor,
)

__all__ = [
    "BACKBONES",
    "BasePredictor",
    "FREEZE_POLICIES",
    "KINDS",
    "ModelConfig",
    "NORMALIZATION_VERSION",
    "NoPredictor",
    "RecurrentPredictor",
    "SinrPredictionNetwork",
    "SinrTransformerPredictor",
    "apply_freeze_policy",
    "check_histories",
    "check_targets",
    "decode_predictor",
    "denormalize",
    "encode_predictor",
    "layernorm_parameter_count",
    "load_predictor",
    "measurement_noise",
    "nmse",
    "nmse_db",
    "normalize",
    "patch_count",
    "patchify",
    "positional_encoding",
    "save_predictor",
    "sinr_attention",
    "to_nmse_db",
]
