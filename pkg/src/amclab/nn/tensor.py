"""Array-backed tensor with a recorded graph for reverse-mode differentiation."""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


_GRAD_ENABLED = [True]


@contextmanager
def no_grad():
    """Disable graph recording (inference)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


class GraphError(RuntimeError):
    """Raised when backward is called on an invalid or released graph."""


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """n-dimensional real array with an optional gradient slot.

    Leaf tensors flagged ``trainable`` accumulate ``grad`` during
    :meth:`backward`. Every other tensor produced by an operation keeps a
    reference to its parents and a closure that pushes its gradient back.
    """

    __array_priority__ = 100

    def __init__(self, data, trainable=False, name=None, dtype=np.float64):
        self.data = np.array(data, dtype=dtype)
        self.grad = None
        self.trainable = bool(trainable)
        self.name = name
        self._parents = ()
        self._backward = None
        self._needs_grad = self.trainable
        self._released = False

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.trainable = False
        out.name = None
        out._needs_grad = _GRAD_ENABLED[-1] and any(p._needs_grad for p in parents)
        if out._needs_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        out._released = False
        return out

    # -- basic properties -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, trainable={self.trainable}{tag})"

    def __len__(self):
        return len(self.data)

    # -- differentiation ---------------------------------------------------
    def backward(self):
        """Populate ``grad`` on every trainable leaf reachable from this scalar."""
        if self.data.size != 1:
            raise GraphError(f"backward requires a scalar, got shape {self.shape}")
        if self._released:
            raise GraphError("graph already consumed by a previous backward; re-run forward")
        if not self._needs_grad:
            raise GraphError("loss does not depend on any trainable tensor")

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent._needs_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.trainable:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent._needs_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        for node in order:
            if node._backward is not None:
                node._released = True
                node._backward = None
                node._parents = ()

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        other = _wrap(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor._from_op(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        other = _wrap(other)
        a, b = self.data, other.data

        def backward(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._from_op(a * b, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        a, b = self.data, other.data
        out = a / b

        def backward(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * out / b, b.shape)

        return Tensor._from_op(out, (self, other), backward)

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        a = self.data

        def backward(g):
            return (g * exponent * a ** (exponent - 1),)

        return Tensor._from_op(a**exponent, (self,), backward)

    def __matmul__(self, other):
        other = _wrap(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError(f"matmul needs ndim >= 2, got {a.shape} @ {b.shape}")

        def backward(g):
            ga = g @ np.swapaxes(b, -1, -2)
            if b.ndim == 2:
                # shared weight matrix: fold the batch axes into one GEMM
                gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(a, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return Tensor._from_op(a @ b, (self, other), backward)

    # -- reductions and shape ----------------------------------------------
    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[i] for i in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._from_op(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._from_op(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),)
        )

    def __getitem__(self, index):
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._from_op(self.data[index], (self,), backward)

    # -- elementwise nonlinearities ---------------------------------------------
    def relu(self):
        if _RELU_MARGIN:
            m = float(np.abs(self.data).min()) if self.data.size else np.inf
            for tracker in _RELU_MARGIN:
                tracker.value = min(tracker.value, m)
        mask = self.data > 0
        return Tensor._from_op(self.data * mask, (self,), lambda g: (g * mask,))

    def sigmoid(self):
        out = _sigmoid(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * out * (1.0 - out),))

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * (1.0 - out * out),))

    def exp(self):
        out = np.exp(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * out,))

    def log(self):
        a = self.data
        return Tensor._from_op(np.log(a), (self,), lambda g: (g / a,))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._from_op(out, (self,), lambda g: (g * 0.5 / out,))

    def softmax(self, axis=-1):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def backward(g):
            return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

        return Tensor._from_op(out, (self,), backward)


_RELU_MARGIN = []


class _Margin:
    value = np.inf


@contextmanager
def track_relu_margin():
    """Record the smallest |pre-activation| seen by any ReLU inside the block."""
    tracker = _Margin()
    _RELU_MARGIN.append(tracker)
    try:
        yield tracker
    finally:
        _RELU_MARGIN.remove(tracker)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _wrap(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(data, tensors, backward)


def stack(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    data = np.stack([t.data for t in tensors], axis=axis)
    return Tensor._from_op(data, tensors, backward)


def conv2d(x, weight, bias=None, padding=1):
    """2-D cross-correlation, stride 1, NCHW layout.

    ``x`` is (B, C_in, H, W), ``weight`` is (C_out, C_in, kh, kw).
    """
    xd, w = x.data, weight.data
    if xd.ndim != 4:
        raise ValueError(f"conv2d expects (B, C, H, W) input, got shape {xd.shape}")
    c_out, c_in, kh, kw = w.shape
    if xd.shape[1] != c_in:
        raise ValueError(f"conv2d input has {xd.shape[1]} channels, weight expects {c_in}")
    b, _, h, wd = xd.shape
    padded = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h_out = h + 2 * padding - kh + 1
    w_out = wd + 2 * padding - kw + 1
    # (B, C_in, kh, kw, H_out, W_out) strided view -> columns
    s = padded.strides
    view = np.lib.stride_tricks.as_strided(
        padded,
        shape=(b, c_in, kh, kw, h_out, w_out),
        strides=(s[0], s[1], s[2], s[3], s[2], s[3]),
        writeable=False,
    )
    cols = view.reshape(b, c_in * kh * kw, h_out * w_out)
    wmat = w.reshape(c_out, -1)
    out = np.matmul(wmat, cols).reshape(b, c_out, h_out, w_out)
    parents = [x, weight]
    if bias is not None:
        out = out + bias.data.reshape(1, c_out, 1, 1)
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(b, c_out, h_out * w_out)
        gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
        gcols = np.matmul(wmat.T, g2).reshape(b, c_in, kh, kw, h_out, w_out)
        gpad = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                gpad[:, :, i : i + h_out, j : j + w_out] += gcols[:, :, i, j]
        gx = gpad[:, :, padding : padding + h, padding : padding + wd]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return Tensor._from_op(out, parents, backward)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then apply ``gain`` and ``bias``."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    g_, b_ = gain.data, bias.data

    def backward(g):
        gxhat = g * g_
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        reduce_axes = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=reduce_axes), g.sum(axis=reduce_axes)

    return Tensor._from_op(xhat * g_ + b_, (x, gain, bias), backward)
