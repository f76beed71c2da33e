"""Four-stage SINR prediction network: SINR attention, embedding, backbone, output head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from amclab.nn import (
    Conv2D,
    FullyConnected,
    LayerNorm,
    Module,
    Tensor,
    TransformerBlock,
    set_trainable,
)
from amclab.predictors.core import patch_count, positional_encoding

BACKBONES = ("tiny-transformer", "identity", "none")
FREEZE_POLICIES = ("ln-only", "all-params", "frozen", "ln+mlp")


@dataclass(frozen=True)
class ModelConfig:
    N: int = 4
    N_SA: int = 4
    d_model: int = 64
    N_LLM: int = 2
    n_heads: int = 4
    backbone_kind: str = "tiny-transformer"
    freeze_policy: str = "ln-only"
    se_reduction: int = 2

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"patch size N must be >= 1, got {self.N}")
        if self.N_SA < 0:
            raise ValueError(f"N_SA must be >= 0, got {self.N_SA}")
        if self.d_model < 1 or self.N_LLM < 0 or self.se_reduction < 1:
            raise ValueError("d_model, se_reduction must be >= 1 and N_LLM >= 0")
        if self.backbone_kind not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone_kind!r}; expected {BACKBONES}")
        if self.freeze_policy not in FREEZE_POLICIES:
            raise ValueError(f"unknown freeze policy {self.freeze_policy!r}; expected {FREEZE_POLICIES}")
        if self.backbone_kind == "tiny-transformer" and self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")

    def to_dict(self):
        return asdict(self)


class SinrAttention(Module):
    """One conv + squeeze-and-excitation iteration with a residual to its input.

    Patches are channels: input and output are (B, L', N, K).
    """

    def __init__(self, channels, reduction=2, rng=None):
        hidden = max(channels // reduction, 1)
        self.conv1 = Conv2D(channels, channels, rng=rng)
        self.conv2 = Conv2D(channels, channels, rng=rng)
        self.fc1 = FullyConnected(channels, hidden, rng=rng)
        self.fc2 = FullyConnected(hidden, channels, rng=rng)

    def forward(self, x):
        feats = self.conv2(self.conv1(x).relu())
        pooled = feats.mean(axis=(2, 3))
        weights = self.fc2(self.fc1(pooled).relu()).sigmoid()
        b, c = weights.shape
        return feats * weights.reshape(b, c, 1, 1) + x


class Embedding(Module):
    """Flatten each patch, project to d_model, add the fixed sin-cos table."""

    def __init__(self, patch_size, n_subcarriers, n_patches, d_model, rng=None):
        self.proj = FullyConnected(patch_size * n_subcarriers, d_model, rng=rng)
        self._pe = positional_encoding(n_patches, d_model)

    def forward(self, x):
        b, p, n, k = x.shape
        return self.proj(x.reshape(b, p, n * k)) + self._pe


class Backbone(Module):
    def __init__(self, config, rng=None):
        self.kind = config.backbone_kind
        if self.kind == "tiny-transformer":
            self.blocks = [
                TransformerBlock(config.d_model, config.n_heads, rng=rng)
                for _ in range(config.N_LLM)
            ]
        else:
            self.blocks = []
        apply_freeze_policy(self, config.freeze_policy)

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return x


def apply_freeze_policy(backbone, policy):
    """Set trainability flags on backbone parameters according to ``policy``."""
    for block in backbone.blocks:
        block.set_trainable(policy == "all-params")
        if policy in ("ln-only", "ln+mlp"):
            for name, p in block.named_parameters():
                if name.startswith(("ln1.", "ln2.")):
                    set_trainable(p, True)
        if policy == "ln+mlp":
            block.mlp.set_trainable(True)


class OutputHead(Module):
    def __init__(self, n_patches, d_model, n_subcarriers, rng=None):
        self.fc1 = FullyConnected(n_patches * d_model, d_model, rng=rng)
        self.fc2 = FullyConnected(d_model, n_subcarriers, rng=rng)

    def forward(self, x):
        b, p, d = x.shape
        return self.fc2(self.fc1(x.reshape(b, p * d)).relu())


class SinrPredictionNetwork(Module):
    """Normalized (B, L', N, K) patches -> normalized (B, K) prediction."""

    def __init__(self, config, L, K, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        self.L = L
        self.K = K
        self.n_patches = patch_count(L, config.N)
        self.attention = [
            SinrAttention(self.n_patches, config.se_reduction, rng=rng)
            for _ in range(config.N_SA)
        ]
        self.embedding = Embedding(config.N, K, self.n_patches, config.d_model, rng=rng)
        self.backbone = Backbone(config, rng=rng)
        self.head = OutputHead(self.n_patches, config.d_model, K, rng=rng)

    def forward(self, patches):
        expected = (self.n_patches, self.config.N, self.K)
        if tuple(patches.shape[1:]) != expected:
            raise ValueError(f"expected patches of shape (B, {expected}), got {patches.shape}")
        x = patches
        for block in self.attention:
            x = block(x)
        return self.head(self.backbone(self.embedding(x)))

    def shape_chain(self):
        c = self.config
        return [
            (self.L, self.K),
            (self.n_patches, c.N, self.K),
            (self.n_patches, c.d_model),
            (self.n_patches, c.d_model),
            (1, self.K),
        ]


def sinr_attention(x, blocks):
    """Apply SINR-attention iterations in sequence; an empty list is the identity."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    for block in blocks:
        x = block(x)
    return x


def layernorm_parameter_count(backbone):
    return sum(
        m.num_parameters()
        for block in backbone.blocks
        for m in (block.ln1, block.ln2)
        if isinstance(m, LayerNorm)
    )
