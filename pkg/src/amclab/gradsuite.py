"""Finite-difference gradient suite over every layer kind and the composed predictor."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from amclab.nn import LAYER_KINDS, LayerSpec, Module, StackedRecurrent, Tensor, TransformerBlock, grad_check
from amclab.nn.layers import FeedForward
from amclab.predictors import ModelConfig, SinrPredictionNetwork
from amclab.predictors.core import patchify


class InputProbe(Module):
    """Wraps a module and owns its input as a trainable tensor, so input gradients get checked too."""

    def __init__(self, inner, x):
        self.inner = inner
        self.input = Tensor(np.array(x, dtype=float), trainable=True)

    def perturb_input(self, rng):
        self.input.data = self.input.data + rng.uniform(-0.05, 0.05, self.input.shape)

    def forward(self, _=None):
        return self.inner(self.input)


TINY_SPECS = {
    "Conv2D": ({"in_channels": 2, "out_channels": 3}, (2, 2, 3, 4)),
    "FullyConnected": ({"in_features": 5, "out_features": 3}, (4, 5)),
    "ReLU": ({}, (3, 5)),
    "Sigmoid": ({}, (3, 5)),
    "GlobalAvgPool2D": ({}, (2, 3, 2, 4)),
    "LayerNorm": ({"features": 6}, (3, 6)),
    "MultiHeadSelfAttention": ({"d_model": 8, "n_heads": 2}, (2, 3, 8)),
    "Softmax": ({"axis": -1}, (3, 5)),
}


@dataclass
class SuiteResult:
    name: str
    max_rel_err: float
    worst: str
    checked: int
    passed: bool


def tiny_model(freeze_policy="all-params", seed=0):
    config = ModelConfig(N=2, N_SA=1, d_model=8, N_LLM=1, n_heads=2, freeze_policy=freeze_policy)
    return SinrPredictionNetwork(config, L=8, K=4, rng=np.random.default_rng(seed))


def suite_cases(seed=0):
    """(name, module, input) triples covering each layer kind, composites and the full model."""
    rng = np.random.default_rng(seed)
    cases = []
    for kind in LAYER_KINDS:
        hp, shape = TINY_SPECS[kind]
        layer = LayerSpec(kind, hp).build(rng)
        cases.append((kind, InputProbe(layer, rng.standard_normal(shape)), None))
    cases.append(("FeedForward", InputProbe(FeedForward(8, 16, rng=rng), rng.standard_normal((2, 3, 8))), None))
    cases.append(("TransformerBlock", InputProbe(TransformerBlock(8, 2, rng=rng), rng.standard_normal((2, 3, 8))), None))
    for cell in ("rnn", "lstm", "gru"):
        net = StackedRecurrent(cell, 3, 4, 2, rng=rng)
        cases.append((f"Recurrent[{cell}]", InputProbe(net, rng.standard_normal((2, 5, 3))), None))
    model = tiny_model(seed=seed)
    x = patchify(rng.standard_normal((2, 8, 4)), 2)
    cases.append(("SinrPredictionNetwork", InputProbe(model, x), None))
    return cases


def run_suite(tol=1e-4, seed=0):
    """Run every case; returns (results, elapsed seconds)."""
    start = time.perf_counter()
    results = []
    for name, module, _ in suite_cases(seed):
        rep = grad_check(module, np.zeros(1), tol=tol, rng=np.random.default_rng(seed))
        results.append(SuiteResult(name, rep.max_rel_err, rep.worst, rep.checked, rep.passed))
    return results, time.perf_counter() - start
