"""Minimal tensor library: reverse-mode autodiff, layers, Adam, checkpoints."""

from amclab.nn.checkpoint import (
    CheckpointError,
    decode_checkpoint,
    encode_checkpoint,
    load_into,
    read_checkpoint,
    save_checkpoint,
)
from amclab.nn.gradcheck import GradCheckReport, grad_check
from amclab.nn.layers import (
    LAYER_KINDS,
    Conv2D,
    FeedForward,
    FullyConnected,
    GlobalAvgPool2D,
    LayerNorm,
    LayerSpec,
    Module,
    MultiHeadSelfAttention,
    ReLU,
    Sequential,
    Sigmoid,
    Softmax,
    TransformerBlock,
    forward,
    set_trainable,
)
from amclab.nn.optim import Adam, AdamState, NonFiniteGradientError, adam_step
from amclab.nn.recurrent import CELL_KINDS, StackedRecurrent
from amclab.nn.tensor import GraphError, Tensor, concat, conv2d, layer_norm, no_grad, stack

__all__ = [
    "Adam",
    "AdamState",
    "CELL_KINDS",
    "CheckpointError",
    "Conv2D",
    "FeedForward",
    "FullyConnected",
    "GlobalAvgPool2D",
    "GradCheckReport",
    "GraphError",
    "LAYER_KINDS",
    "LayerNorm",
    "LayerSpec",
    "Module",
    "MultiHeadSelfAttention",
    "NonFiniteGradientError",
    "ReLU",
    "Sequential",
    "Sigmoid",
    "Softmax",
    "StackedRecurrent",
    "Tensor",
    "TransformerBlock",
    "adam_step",
    "concat",
    "conv2d",
    "decode_checkpoint",
    "encode_checkpoint",
    "forward",
    "grad_check",
    "layer_norm",
    "load_into",
    "no_grad",
    "read_checkpoint",
    "save_checkpoint",
    "set_trainable",
    "stack",
]
