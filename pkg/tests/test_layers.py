import numpy as np
import pytest

from amclab.gradsuite import InputProbe, suite_cases
from amclab.nn import (
    LAYER_KINDS,
    Conv2D,
    FullyConnected,
    GlobalAvgPool2D,
    LayerSpec,
    Module,
    Sequential,
    StackedRecurrent,
    Tensor,
    forward,
    grad_check,
)
from amclab.predictors.network import SinrAttention


def test_fully_connected_identity_weights():
    fc = FullyConnected(4, 4)
    fc.weight.data = np.eye(4)
    fc.bias.data = np.zeros(4)
    x = np.arange(8.0).reshape(2, 4)
    np.testing.assert_array_equal(fc(Tensor(x)).data, x)


def test_global_avg_pool_of_ones():
    out = forward(LayerSpec("GlobalAvgPool2D"), np.ones((1, 5, 2, 2)))
    np.testing.assert_array_equal(out.data, np.ones((1, 5)))


def test_layerspec_rejects_bad_hyperparameters():
    with pytest.raises(ValueError, match="divisible"):
        LayerSpec("MultiHeadSelfAttention", {"d_model": 10, "n_heads": 3})
    with pytest.raises(ValueError, match="unknown layer kind"):
        LayerSpec("Dropout")
    with pytest.raises(ValueError, match="missing"):
        LayerSpec("FullyConnected", {"in_features": 3})
    with pytest.raises(ValueError):
        LayerSpec("Conv2D", {"in_channels": 0, "out_channels": 2})


def test_fully_connected_shape_mismatch_names_dims():
    fc = FullyConnected(4, 3)
    with pytest.raises(ValueError, match="4"):
        fc(Tensor(np.ones((2, 5))))


def test_conv_shape_mismatch():
    conv = Conv2D(2, 2)
    with pytest.raises(ValueError):
        conv(Tensor(np.ones((1, 3, 4, 4))))


@pytest.mark.parametrize("name,module,_", suite_cases(seed=7), ids=lambda v: v if isinstance(v, str) else "")
def test_every_layer_kind_passes_grad_check(name, module, _):
    rep = grad_check(module, np.zeros(1), tol=1e-4, rng=np.random.default_rng(3))
    assert rep.passed, (name, rep)


def test_suite_covers_every_layer_kind():
    names = {name for name, _, _ in suite_cases()}
    assert set(LAYER_KINDS) <= names


def test_fc_random_input_passes(rng):
    fc = FullyConnected(4, 3, rng=rng)
    rep = grad_check(fc, rng.uniform(-1, 1, (5, 4)))
    assert rep.passed and rep.max_rel_err < 1e-4


def test_frozen_parameter_excluded_from_check(rng):
    fc = FullyConnected(4, 3, rng=rng)
    fc.bias.trainable = False
    fc.bias._needs_grad = False
    rep = grad_check(fc, rng.standard_normal((2, 4)))
    assert rep.checked == 12
    assert fc.bias.grad is None


def test_sinr_attention_block_passes(rng):
    block = SinrAttention(4, reduction=2, rng=rng)
    rep = grad_check(InputProbe(block, rng.standard_normal((2, 4, 3, 5))), np.zeros(1))
    assert rep.passed


class _ConvSeFc(Module):
    def __init__(self, rng):
        self.conv = Conv2D(3, 3, rng=rng)
        self.se1 = FullyConnected(3, 2, rng=rng)
        self.se2 = FullyConnected(2, 3, rng=rng)
        self.pool = GlobalAvgPool2D()
        self.out = FullyConnected(3 * 2 * 4, 2, rng=rng)

    def forward(self, x):
        f = self.conv(x).relu()
        w = self.se2(self.se1(self.pool(f)).relu()).sigmoid()
        s = f * w.reshape(w.shape[0], 3, 1, 1) + x
        return self.out(s.reshape(s.shape[0], -1))


def test_composite_conv_se_fc_chain(rng):
    rep = grad_check(_ConvSeFc(rng), rng.standard_normal((2, 3, 2, 4)))
    assert rep.passed, rep


def test_grad_check_reports_non_finite_gradient(rng):
    class Bad(Module):
        def __init__(self):
            self.w = Tensor(np.ones(3), trainable=True)

        def forward(self, x):
            return (self.w - 1.0).sqrt() * x

    with np.errstate(divide="ignore", invalid="ignore"), pytest.raises(FloatingPointError, match="in w"):
        grad_check(Bad(), np.array([1.0, 1.0, 2.0]))


def test_sequential_and_recurrent_shapes(rng):
    seq = Sequential(FullyConnected(3, 4, rng=rng), LayerSpec("ReLU").build())
    assert seq(Tensor(np.ones((2, 3)))).shape == (2, 4)
    for kind in ("rnn", "lstm", "gru"):
        net = StackedRecurrent(kind, 3, 5, 4, rng=rng)
        assert net(Tensor(rng.standard_normal((2, 6, 3)))).shape == (2, 5)
    with pytest.raises(ValueError):
        StackedRecurrent("transformer", 3, 5, 1)


def test_module_parameter_accounting(rng):
    fc = FullyConnected(4, 3, rng=rng)
    assert fc.num_parameters() == 15
    fc.set_trainable(False)
    assert fc.num_parameters(trainable_only=True) == 0
