"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from amclab.nn.tensor import Tensor, track_relu_margin


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst: str
    checked: int
    passed: bool


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite gradient in {name}")


def grad_check(
    module, x, tol=1e-4, step=1e-5, loss_fn=None, rng=None, max_entries=None, kink_margin=1e-3
):
    """Compare backward() gradients of ``loss_fn(module(x))`` against central differences.

    The loss defaults to a fixed random projection of the output so every
    output element contributes. Only trainable parameters are checked;
    frozen ones are left without a gradient. ``max_entries`` subsamples
    each parameter to keep big layers cheap. If any ReLU pre-activation
    lies within ``kink_margin`` of zero the input is jittered and the
    forward pass retried; modules that own their input expose
    ``perturb_input(rng)`` for this.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if not isinstance(x, Tensor):
        x = Tensor(x)
    params = [(n, p) for n, p in module.named_parameters() if p.trainable]
    for n, p in module.named_parameters():
        if not np.all(np.isfinite(p.data)):
            raise ValueError(f"non-finite parameter {n}")

    probe = None

    def default_loss(out):
        nonlocal probe
        if probe is None:
            probe = rng.standard_normal(out.shape)
        return (out * probe).sum()

    loss_fn = default_loss if loss_fn is None else loss_fn

    def evaluate():
        return float(loss_fn(module(x)).data)

    for _ in range(20):
        with track_relu_margin() as margin:
            module(x)
        if margin.value >= kink_margin:
            break
        if hasattr(module, "perturb_input"):
            module.perturb_input(rng)
        else:
            x = Tensor(x.data + rng.uniform(-0.05, 0.05, x.shape))
    else:
        raise RuntimeError(f"could not move inputs away from ReLU kinks (margin {margin.value:.2e})")

    module.zero_grad()
    loss = loss_fn(module(x))
    loss.backward()

    worst, worst_name, checked = 0.0, "", 0
    for name, p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        _finite(name, analytic)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = evaluate()
            flat[i] = orig - step
            down = evaluate()
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(numeric), 1e-8)
            checked += 1
            if err > worst:
                worst, worst_name = err, f"{name}[{i}]"
    module.zero_grad()
    return GradCheckReport(worst, worst_name, checked, worst < tol)
