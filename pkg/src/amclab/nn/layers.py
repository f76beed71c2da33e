"""Layer set used by the predictors, built on :mod:`amclab.nn.tensor`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from amclab.nn.tensor import Tensor, conv2d, layer_norm

LAYER_KINDS = (
    "Conv2D",
    "FullyConnected",
    "ReLU",
    "Sigmoid",
    "GlobalAvgPool2D",
    "LayerNorm",
    "MultiHeadSelfAttention",
    "Softmax",
)


class Module:
    """Container base class: parameters and sub-modules are found by attribute scan."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def set_trainable(self, flag):
        for p in self.parameters():
            set_trainable(p, flag)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self, trainable_only=False):
        return int(sum(p.size for p in self.parameters() if p.trainable or not trainable_only))


def _param(data, name=None):
    return Tensor(data, trainable=True, name=name)


def set_trainable(tensor, flag):
    tensor.trainable = bool(flag)
    tensor._needs_grad = bool(flag)
    if not flag:
        tensor.grad = None


class FullyConnected(Module):
    """Affine map on the last axis: ``x @ W + b``."""

    def __init__(self, in_features, out_features, rng=None, bias=True):
        if in_features < 1 or out_features < 1:
            raise ValueError(f"feature dims must be positive, got {in_features}->{out_features}")
        rng = np.random.default_rng() if rng is None else rng
        bound = 1.0 / np.sqrt(in_features)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = _param(rng.uniform(-bound, bound, (in_features, out_features)))
        self.bias = _param(np.zeros(out_features)) if bias else None

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise ValueError(
                f"FullyConnected expects last dim {self.in_features}, got shape {x.shape}"
            )
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class Conv2D(Module):
    """3x3 (default) same-padding convolution over (B, C, H, W)."""

    def __init__(self, in_channels, out_channels, kernel_size=3, rng=None):
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel_size must be odd for same padding, got {kernel_size}")
        if in_channels < 1 or out_channels < 1:
            raise ValueError(f"channel counts must be positive, got {in_channels}->{out_channels}")
        rng = np.random.default_rng() if rng is None else rng
        fan_in = in_channels * kernel_size * kernel_size
        bound = np.sqrt(2.0 / fan_in)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.weight = _param(
            rng.normal(0.0, bound, (out_channels, in_channels, kernel_size, kernel_size))
        )
        self.bias = _param(np.zeros(out_channels))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"Conv2D expects (B, {self.in_channels}, H, W) input, got shape {x.shape}"
            )
        return conv2d(x, self.weight, self.bias, padding=self.kernel_size // 2)


class ReLU(Module):
    def forward(self, x):
        return x.relu()


class Sigmoid(Module):
    def forward(self, x):
        return x.sigmoid()


class Softmax(Module):
    def __init__(self, axis=-1):
        self.axis = axis

    def forward(self, x):
        return x.softmax(self.axis)


class GlobalAvgPool2D(Module):
    """(B, C, H, W) -> (B, C) mean over the spatial grid."""

    def forward(self, x):
        if x.ndim != 4:
            raise ValueError(f"GlobalAvgPool2D expects (B, C, H, W), got shape {x.shape}")
        return x.mean(axis=(2, 3))


class LayerNorm(Module):
    def __init__(self, features, eps=1e-5):
        if features < 1:
            raise ValueError(f"LayerNorm features must be positive, got {features}")
        self.features = features
        self.eps = eps
        self.gain = _param(np.ones(features))
        self.bias = _param(np.zeros(features))

    def forward(self, x):
        if x.shape[-1] != self.features:
            raise ValueError(f"LayerNorm expects last dim {self.features}, got shape {x.shape}")
        return layer_norm(x, self.gain, self.bias, self.eps)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over (B, T, D).

    The key projection has no bias: a key bias shifts every score in a row
    by the same amount, so softmax ignores it and its gradient is zero.
    """

    def __init__(self, d_model, n_heads, rng=None):
        if d_model % n_heads != 0:
            raise ValueError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.query = FullyConnected(d_model, d_model, rng=rng)
        self.key = FullyConnected(d_model, d_model, rng=rng, bias=False)
        self.value = FullyConnected(d_model, d_model, rng=rng)
        self.proj = FullyConnected(d_model, d_model, rng=rng)

    def forward(self, x):
        b, t, d = x.shape
        h = self.n_heads
        dh = d // h
        q = self.query(x).reshape(b, t, h, dh).transpose(0, 2, 1, 3)
        k = self.key(x).reshape(b, t, h, dh).transpose(0, 2, 1, 3)
        v = self.value(x).reshape(b, t, h, dh).transpose(0, 2, 1, 3)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
        attn = scores.softmax(-1)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.proj(ctx)


class FeedForward(Module):
    def __init__(self, d_model, hidden, rng=None):
        self.fc1 = FullyConnected(d_model, hidden, rng=rng)
        self.fc2 = FullyConnected(hidden, d_model, rng=rng)

    def forward(self, x):
        return self.fc2(self.fc1(x).relu())


class TransformerBlock(Module):
    """Pre-norm block: x + attn(ln1(x)), then x + mlp(ln2(x))."""

    def __init__(self, d_model, n_heads, ff_mult=4, rng=None):
        self.ln1 = LayerNorm(d_model)
        self.attn = MultiHeadSelfAttention(d_model, n_heads, rng=rng)
        self.ln2 = LayerNorm(d_model)
        self.mlp = FeedForward(d_model, ff_mult * d_model, rng=rng)

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


@dataclass
class LayerSpec:
    """Declarative layer description; hyperparameters are checked on construction."""

    kind: str
    hyperparameters: dict = field(default_factory=dict)

    _REQUIRED = {
        "Conv2D": ("in_channels", "out_channels"),
        "FullyConnected": ("in_features", "out_features"),
        "LayerNorm": ("features",),
        "MultiHeadSelfAttention": ("d_model", "n_heads"),
    }

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}")
        hp = self.hyperparameters
        missing = [k for k in self._REQUIRED.get(self.kind, ()) if k not in hp]
        if missing:
            raise ValueError(f"{self.kind} is missing hyperparameters {missing}")
        for key, value in hp.items():
            if key in ("eps", "axis"):
                continue
            if isinstance(value, (int, np.integer)) and value < 1:
                raise ValueError(f"{self.kind}.{key} must be positive, got {value}")
        if self.kind == "MultiHeadSelfAttention" and hp["d_model"] % hp["n_heads"]:
            raise ValueError(
                f"d_model={hp['d_model']} is not divisible by n_heads={hp['n_heads']}"
            )
        if self.kind == "Conv2D" and hp.get("kernel_size", 3) % 2 != 1:
            raise ValueError(f"kernel_size must be odd, got {hp['kernel_size']}")

    def build(self, rng=None):
        hp = dict(self.hyperparameters)
        if self.kind in ("Conv2D", "FullyConnected", "MultiHeadSelfAttention"):
            hp["rng"] = rng
        return _BUILDERS[self.kind](**hp)


_BUILDERS = {
    "Conv2D": Conv2D,
    "FullyConnected": FullyConnected,
    "ReLU": ReLU,
    "Sigmoid": Sigmoid,
    "GlobalAvgPool2D": GlobalAvgPool2D,
    "LayerNorm": LayerNorm,
    "MultiHeadSelfAttention": MultiHeadSelfAttention,
    "Softmax": Softmax,
}


def forward(layer, x):
    """Apply a built layer (or a :class:`LayerSpec`, built on the fly) to ``x``."""
    if isinstance(layer, LayerSpec):
        layer = layer.build()
    if not isinstance(x, Tensor):
        x = Tensor(x)
    return layer(x)
