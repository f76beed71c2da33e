"""Stacked RNN / LSTM / GRU layers unrolled through the tensor graph."""

from __future__ import annotations

import numpy as np

from amclab.nn.layers import FullyConnected, Module
from amclab.nn.tensor import Tensor, concat

CELL_KINDS = ("rnn", "lstm", "gru")


class RNNCell(Module):
    def __init__(self, input_size, hidden_size, rng=None):
        self.hidden_size = hidden_size
        self.lin = FullyConnected(input_size + hidden_size, hidden_size, rng=rng)

    def initial_state(self, batch):
        return Tensor(np.zeros((batch, self.hidden_size)))

    def forward(self, x, h):
        h = self.lin(concat([x, h], axis=-1)).tanh()
        return h, h


class LSTMCell(Module):
    def __init__(self, input_size, hidden_size, rng=None):
        self.hidden_size = hidden_size
        self.lin = FullyConnected(input_size + hidden_size, 4 * hidden_size, rng=rng)
        # forget-gate bias starts at 1 so early gradients pass through the cell state
        self.lin.bias.data[hidden_size : 2 * hidden_size] = 1.0

    def initial_state(self, batch):
        zeros = np.zeros((batch, self.hidden_size))
        return Tensor(zeros), Tensor(zeros)

    def forward(self, x, state):
        h, c = state
        n = self.hidden_size
        z = self.lin(concat([x, h], axis=-1))
        i = z[:, :n].sigmoid()
        f = z[:, n : 2 * n].sigmoid()
        g = z[:, 2 * n : 3 * n].tanh()
        o = z[:, 3 * n :].sigmoid()
        c = f * c + i * g
        h = o * c.tanh()
        return h, (h, c)


class GRUCell(Module):
    def __init__(self, input_size, hidden_size, rng=None):
        self.hidden_size = hidden_size
        self.gates = FullyConnected(input_size + hidden_size, 2 * hidden_size, rng=rng)
        self.cand_x = FullyConnected(input_size, hidden_size, rng=rng)
        self.cand_h = FullyConnected(hidden_size, hidden_size, rng=rng, bias=False)

    def initial_state(self, batch):
        return Tensor(np.zeros((batch, self.hidden_size)))

    def forward(self, x, h):
        n = self.hidden_size
        zr = self.gates(concat([x, h], axis=-1)).sigmoid()
        z, r = zr[:, :n], zr[:, n:]
        cand = (self.cand_x(x) + r * self.cand_h(h)).tanh()
        h = (1.0 - z) * h + z * cand
        return h, h


_CELLS = {"rnn": RNNCell, "lstm": LSTMCell, "gru": GRUCell}


class StackedRecurrent(Module):
    """``num_layers`` cells of one kind run over (B, T, F); returns last top-layer output."""

    def __init__(self, kind, input_size, hidden_size, num_layers, rng=None):
        if kind not in _CELLS:
            raise ValueError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}")
        if num_layers < 1 or hidden_size < 1:
            raise ValueError("num_layers and hidden_size must be positive")
        self.kind = kind
        cls = _CELLS[kind]
        self.cells = [
            cls(input_size if i == 0 else hidden_size, hidden_size, rng=rng)
            for i in range(num_layers)
        ]

    def forward(self, x):
        b, t, _ = x.shape
        states = [cell.initial_state(b) for cell in self.cells]
        out = None
        for step in range(t):
            inp = x[:, step, :]
            for li, cell in enumerate(self.cells):
                inp, states[li] = cell(inp, states[li])
            out = inp
        return out
