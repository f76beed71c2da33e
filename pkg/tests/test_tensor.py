import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from amclab.nn import GraphError, Tensor, concat, conv2d, layer_norm, no_grad, stack


def test_linear_form_gradient_is_input():
    x = np.array([1.5, -2.0, 3.0])
    w = Tensor(np.array([0.1, 0.2, 0.3]), trainable=True)
    (w * x).sum().backward()
    np.testing.assert_array_equal(w.grad, x)


def test_relu_dead_region_has_zero_grad():
    x = Tensor(np.array([-1.0, -0.5, -3.0]), trainable=True)
    x.relu().sum().backward()
    np.testing.assert_array_equal(x.grad, np.zeros(3))


def test_relu_values():
    np.testing.assert_array_equal(Tensor([-1.0, 0.0, 2.0]).relu().data, [0.0, 0.0, 2.0])


def test_backward_rejects_non_scalar():
    w = Tensor(np.ones(3), trainable=True)
    with pytest.raises(GraphError):
        (w * 2.0).backward()


def test_backward_twice_is_an_error():
    w = Tensor(np.ones(3), trainable=True)
    loss = (w * w).sum()
    loss.backward()
    with pytest.raises(GraphError):
        loss.backward()


def test_frozen_tensor_never_gets_grad():
    w = Tensor(np.ones(3), trainable=True)
    frozen = Tensor(np.full(3, 2.0), trainable=False)
    (w * frozen).sum().backward()
    assert frozen.grad is None
    np.testing.assert_array_equal(w.grad, [2.0, 2.0, 2.0])


def test_no_grad_records_nothing():
    w = Tensor(np.ones(3), trainable=True)
    with no_grad():
        out = (w * 3.0).sum()
    with pytest.raises(GraphError):
        out.backward()


def test_gradient_accumulates_over_shared_use():
    w = Tensor(np.array([2.0]), trainable=True)
    (w * w + w).sum().backward()
    np.testing.assert_allclose(w.grad, [5.0])


def test_broadcast_add_reduces_grad():
    b = Tensor(np.zeros(3), trainable=True)
    x = np.ones((4, 3))
    (Tensor(x) + b).sum().backward()
    np.testing.assert_array_equal(b.grad, np.full(3, 4.0))


def _numeric(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


@pytest.mark.parametrize("op", ["sigmoid", "tanh", "exp", "softmax"])
def test_unary_ops_match_finite_differences(op, rng):
    x0 = rng.standard_normal((3, 4))
    probe = rng.standard_normal((3, 4))

    def f(arr):
        return float((getattr(Tensor(arr), op)().data * probe).sum())

    x = Tensor(x0.copy(), trainable=True)
    (getattr(x, op)() * probe).sum().backward()
    np.testing.assert_allclose(x.grad, _numeric(f, x0.copy()), rtol=1e-6, atol=1e-8)


def test_log_sqrt_div_pow_gradients(rng):
    x0 = rng.uniform(0.5, 2.0, (5,))

    def f(arr):
        t = Tensor(arr)
        return float(((t.log() + t.sqrt()) / (t**2 + 1.0)).sum().data)

    x = Tensor(x0.copy(), trainable=True)
    ((x.log() + x.sqrt()) / (x**2 + 1.0)).sum().backward()
    np.testing.assert_allclose(x.grad, _numeric(f, x0.copy()), rtol=1e-6)


def test_matmul_batched_gradients(rng):
    a0 = rng.standard_normal((2, 3, 4))
    b0 = rng.standard_normal((4, 5))
    a = Tensor(a0.copy(), trainable=True)
    b = Tensor(b0.copy(), trainable=True)
    (a @ b).sum().backward()
    np.testing.assert_allclose(a.grad, _numeric(lambda v: float((v @ b0).sum()), a0.copy()), rtol=1e-6)
    np.testing.assert_allclose(b.grad, _numeric(lambda v: float((a0 @ v).sum()), b0.copy()), rtol=1e-6)


def test_getitem_concat_stack_gradients(rng):
    x = Tensor(rng.standard_normal((4, 3)), trainable=True)
    y = concat([x[1:3], x[:1]], axis=0)
    z = stack([y, y * 2.0], axis=0)
    z.sum().backward()
    np.testing.assert_allclose(x.grad, np.array([[3.0] * 3, [3.0] * 3, [3.0] * 3, [0.0] * 3]))


def test_conv2d_same_padding_identity_kernel():
    x = np.arange(12.0).reshape(1, 1, 3, 4)
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    out = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x)


def test_conv2d_gradients(rng):
    x0 = rng.standard_normal((2, 2, 3, 4))
    w0 = rng.standard_normal((3, 2, 3, 3))
    probe = rng.standard_normal((2, 3, 3, 4))
    x = Tensor(x0.copy(), trainable=True)
    w = Tensor(w0.copy(), trainable=True)
    (conv2d(x, w) * probe).sum().backward()
    fx = lambda v: float((conv2d(Tensor(v), Tensor(w0)).data * probe).sum())
    fw = lambda v: float((conv2d(Tensor(x0), Tensor(v)).data * probe).sum())
    np.testing.assert_allclose(x.grad, _numeric(fx, x0.copy()), rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(w.grad, _numeric(fw, w0.copy()), rtol=1e-5, atol=1e-8)


def test_layer_norm_statistics(rng):
    x = rng.standard_normal((6, 10)) * 5 + 3
    out = layer_norm(Tensor(x), Tensor(np.ones(10)), Tensor(np.zeros(10))).data
    assert np.all(np.abs(out.mean(axis=-1)) < 1e-6)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)


@given(arrays(np.float64, (3, 5), elements=st.floats(-30, 30)))
def test_softmax_rows_sum_to_one(x):
    s = Tensor(x).softmax(axis=-1).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


@given(arrays(np.float64, (7,), elements=st.floats(-30, 30)))
def test_sigmoid_in_open_unit_interval(x):
    s = Tensor(x).sigmoid().data
    assert np.all((s > 0) & (s < 1))


def test_forward_backward_deterministic(rng):
    x0 = rng.standard_normal((4, 4))
    outs = []
    for _ in range(2):
        w = Tensor(x0.copy(), trainable=True)
        loss = ((w @ w).tanh() * 3.0).sum()
        loss.backward()
        outs.append((loss.data.tobytes(), w.grad.tobytes()))
    assert outs[0] == outs[1]
