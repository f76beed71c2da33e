import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from amclab.channel import ChannelConfig, sample_dataset
from amclab.nn import Tensor
from amclab.predictors import (
    ModelConfig,
    NoPredictor,
    RecurrentPredictor,
    SinrPredictionNetwork,
    SinrTransformerPredictor,
    decode_predictor,
    denormalize,
    encode_predictor,
    layernorm_parameter_count,
    load_predictor,
    nmse,
    nmse_db,
    normalize,
    patchify,
    positional_encoding,
    save_predictor,
    sinr_attention,
)
from amclab.predictors.network import Backbone, Embedding, OutputHead, SinrAttention


@pytest.fixture(scope="module")
def small_data():
    ds = sample_dataset(ChannelConfig(), 64, seed=5)
    return ds.history_db, ds.target_db


def _zero(module):
    for p in module.parameters():
        p.data = np.zeros_like(p.data)


# normalization -----------------------------------------------------------

def test_normalize_examples():
    out, mu, sigma = normalize(np.array([[1.0], [3.0]]))
    assert (mu, sigma) == (2.0, 1.0)
    np.testing.assert_array_equal(out.ravel(), [-1.0, 1.0])
    out, _, sigma = normalize(np.full((4, 3), 7.0))
    assert sigma == 1e-6
    np.testing.assert_array_equal(out, 0.0)


@given(arrays(np.float64, (5, 4), elements=st.floats(-50, 50)))
def test_normalize_round_trip(x):
    out, mu, sigma = normalize(x)
    np.testing.assert_allclose(denormalize(out, mu, sigma), x, atol=1e-9)


# patching and positional encoding ----------------------------------------

def test_patchify_examples():
    assert patchify(np.ones((16, 3)), 4).shape == (4, 4, 3)
    p = patchify(np.ones((10, 3)), 4)
    assert p.shape == (3, 4, 3)
    np.testing.assert_array_equal(p[2, 2:], 0.0)
    np.testing.assert_array_equal(p[2, :2], 1.0)
    assert patchify(np.ones((5, 2)), 5).shape == (1, 5, 2)
    assert patchify(np.ones((7, 16, 3)), 4).shape == (7, 4, 4, 3)


def test_positional_encoding_examples():
    pe = positional_encoding(4, 8)
    np.testing.assert_array_equal(pe[0, 0::2], 0.0)
    np.testing.assert_array_equal(pe[0, 1::2], 1.0)
    assert pe[1, 0] == pytest.approx(0.8415, abs=1e-4)


# NMSE ----------------------------------------------------------------------

def test_nmse_examples():
    assert nmse(np.array([3.0, 4.0]), np.array([0.0, 4.0])) == pytest.approx(9 / 16)
    assert nmse(np.zeros(3), np.array([1.0, 2.0, 3.0])) == 1.0
    assert nmse_db(np.ones(3), np.ones(3)) == -100.0
    with pytest.raises(ValueError):
        nmse(np.ones(2), np.zeros(2))


# network pieces ------------------------------------------------------------

def test_sinr_attention_identity_cases(rng):
    x = rng.standard_normal((2, 4, 4, 3))
    np.testing.assert_array_equal(sinr_attention(x, []).data, x)
    block = SinrAttention(4, rng=rng)
    block.conv1.weight.data[:] = 0
    block.conv1.bias.data[:] = 0
    block.conv2.weight.data[:] = 0
    block.conv2.bias.data[:] = 0
    np.testing.assert_array_equal(block(Tensor(x)).data, x)


def test_sinr_attention_symmetry():
    # equal channels and per-channel-symmetric weights give equal SE weights
    block = SinrAttention(4, reduction=2, rng=np.random.default_rng(0))
    for conv in (block.conv1, block.conv2):
        conv.weight.data[:] = conv.weight.data[0, 0]
        conv.bias.data[:] = conv.bias.data[0]
    block.fc1.weight.data[:] = block.fc1.weight.data[:1, :]
    block.fc2.weight.data[:] = block.fc2.weight.data[0, 0]
    block.fc2.bias.data[:] = block.fc2.bias.data[0]
    x = np.repeat(np.random.default_rng(1).standard_normal((1, 1, 4, 3)), 4, axis=1)
    out = block(Tensor(x)).data
    for c in range(1, 4):
        np.testing.assert_allclose(out[:, c], out[:, 0], atol=1e-12)


def test_embedding_with_zero_weights_is_pe(rng):
    emb = Embedding(4, 3, 4, 8, rng=rng)
    _zero(emb)
    out = emb(Tensor(rng.standard_normal((2, 4, 4, 3)))).data
    np.testing.assert_array_equal(out, np.broadcast_to(positional_encoding(4, 8), out.shape))


def test_identity_backbone_passes_through(rng):
    bb = Backbone(ModelConfig(backbone_kind="identity"), rng=rng)
    x = rng.standard_normal((2, 4, 64))
    np.testing.assert_array_equal(bb(Tensor(x)).data, x)


def test_frozen_backbone_has_no_trainable_parameters():
    bb = Backbone(ModelConfig(freeze_policy="frozen"), rng=np.random.default_rng(0))
    assert bb.num_parameters(trainable_only=True) == 0 and bb.num_parameters() > 0


def test_ln_only_trainable_count():
    bb = Backbone(ModelConfig(N_LLM=2, d_model=64), rng=np.random.default_rng(0))
    assert bb.num_parameters(trainable_only=True) == 2 * 2 * 2 * 64 == 512
    assert layernorm_parameter_count(bb) == 512


def test_ln_only_trainable_total_independent_of_backbone_sizes():
    def trainable(n_llm, heads):
        net = SinrPredictionNetwork(ModelConfig(N_LLM=n_llm, n_heads=heads), 16, 48, np.random.default_rng(0))
        non_backbone = sum(m.num_parameters() for m in (net.embedding, net.head)) + sum(
            a.num_parameters() for a in net.attention
        )
        assert net.num_parameters(trainable_only=True) == non_backbone + layernorm_parameter_count(net.backbone)
        return net.num_parameters(trainable_only=True) - layernorm_parameter_count(net.backbone)

    assert trainable(1, 4) == trainable(3, 8)


def test_d_model_must_divide_heads():
    with pytest.raises(ValueError, match="divisible"):
        ModelConfig(d_model=30, n_heads=4)
    with pytest.raises(ValueError):
        ModelConfig(backbone_kind="gpt")
    with pytest.raises(ValueError):
        ModelConfig(freeze_policy="half")


def test_output_head_examples(rng):
    head = OutputHead(4, 8, 5, rng=rng)
    _zero(head)
    out = head(Tensor(rng.standard_normal((3, 4, 8)))).data
    assert out.shape == (3, 5)
    np.testing.assert_array_equal(denormalize(out, np.full(3, 5.0), np.full(3, 2.0)), 5.0)
    np.testing.assert_array_equal(denormalize(np.ones((1, 5)), np.array([5.0]), np.array([2.0])), 7.0)


def test_shape_chain_asserted(rng):
    net = SinrPredictionNetwork(ModelConfig(N=4, d_model=16, n_heads=4), 10, 6, rng)
    assert net.shape_chain() == [(10, 6), (3, 4, 6), (3, 16), (3, 16), (1, 6)]
    assert net(Tensor(patchify(rng.standard_normal((2, 10, 6)), 4))).shape == (2, 6)
    with pytest.raises(ValueError, match="expected patches"):
        net(Tensor(rng.standard_normal((2, 4, 4, 6))))


# estimators ----------------------------------------------------------------

def test_np_returns_last_row(small_data):
    X, y = small_data
    np.testing.assert_array_equal(NoPredictor().fit(X, y).predict(X), X[:, -1])
    static = np.repeat(X[:1, -1:], 16, axis=1)
    assert nmse(NoPredictor().predict(static), static[:, -1]) == 0.0


def test_history_validation():
    with pytest.raises(ValueError, match="non-finite"):
        NoPredictor().predict(np.full((1, 4, 3), np.nan))
    with pytest.raises(ValueError):
        NoPredictor().predict(np.ones(3))


def test_normalization_shift_invariance(small_data):
    X, y = small_data
    m = SinrTransformerPredictor(epochs=1, random_state=0).fit(X[:32], y[:32])
    np.testing.assert_allclose(m.predict(X[:8] + 7.5), m.predict(X[:8]) + 7.5, atol=1e-6)


def test_zero_epochs_equals_initialization(small_data):
    X, y = small_data
    fitted = SinrTransformerPredictor(epochs=0, random_state=3).fit(X, y)
    init = SinrTransformerPredictor(epochs=0, random_state=3).initialize(16, 48)
    for (n, a), (_, b) in zip(fitted.network_.named_parameters(), init.network_.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=n)


def test_same_seed_identical_loss_curves(small_data):
    X, y = small_data
    a = SinrTransformerPredictor(epochs=2, random_state=1, batch_size=16).fit(X, y)
    b = SinrTransformerPredictor(epochs=2, random_state=1, batch_size=16).fit(X, y)
    assert a.loss_curve_ == b.loss_curve_


def test_overfit_single_batch(small_data):
    X, y = small_data
    m = SinrTransformerPredictor(epochs=500, batch_size=8, noise_snr_range=None, random_state=0)
    m.fit(X[:8], y[:8])
    assert 10 * np.log10(m.loss_curve_[-1]) < -30
    assert nmse_db(m.predict(X[:8]), y[:8]) < -30


def test_nan_loss_reports_location(small_data):
    X, y = small_data
    bad = y.copy()
    bad[3, 0] = np.inf
    with pytest.raises(ValueError):
        SinrTransformerPredictor(epochs=1).fit(X, bad)
    m = SinrTransformerPredictor(epochs=1, lr=1e300, batch_size=16)
    with np.errstate(all="ignore"), pytest.raises(FloatingPointError, match="epoch 0, batch"):
        m.fit(X, y)


def test_best_validation_checkpoint_is_kept(small_data):
    X, y = small_data
    m = SinrTransformerPredictor(epochs=3, batch_size=16, random_state=0).fit(X[:48], y[:48], X[48:], y[48:])
    assert len(m.val_curve_) == 3
    assert nmse(m.predict(X[48:]), y[48:]) == pytest.approx(min(m.val_curve_), rel=1e-9)


@pytest.mark.parametrize("cell", ["rnn", "lstm", "gru"])
def test_recurrent_baselines_fit_and_predict(cell, small_data):
    X, y = small_data
    m = RecurrentPredictor(cell=cell, hidden_size=8, num_layers=4, epochs=1, batch_size=32).fit(X, y)
    assert m.predict(X[:3]).shape == (3, 48)
    assert len(m.network_.rnn.cells) == 4


def test_sklearn_estimator_api():
    m = SinrTransformerPredictor(d_model=32, n_heads=2)
    params = m.get_params()
    assert params["d_model"] == 32 and params["freeze_policy"] == "ln-only"
    c = clone(m)
    assert c.get_params() == params
    m.set_params(epochs=3)
    assert m.epochs == 3


def test_mismatched_history_shape_names_dims(small_data):
    X, y = small_data
    m = SinrTransformerPredictor(epochs=0).fit(X, y)
    with pytest.raises(ValueError, match="expected L=16, got L=8"):
        m.predict(X[:, :8])
    with pytest.raises(ValueError, match="expected K=48, got K=12"):
        m.predict(X[:, :, :12])


def test_checkpoint_round_trip_and_mismatch(tmp_path, small_data):
    X, y = small_data
    m = SinrTransformerPredictor(epochs=1, batch_size=32, random_state=2).fit(X, y)
    path = tmp_path / "model.amck"
    save_predictor(path, m, config_digest="cafe")
    back = load_predictor(path)
    assert back.config_digest_ == "cafe" and back.get_params() == m.get_params()
    assert back.loss_curve_ == m.loss_curve_
    for (n, a), (_, b) in zip(m.network_.named_parameters(), back.network_.named_parameters()):
        np.testing.assert_array_equal(b.data, a.data.astype(np.float32))
        assert a.trainable == b.trainable, n
    np.testing.assert_allclose(back.predict(X[:4]), m.predict(X[:4]), atol=1e-3)
    assert encode_predictor(back, "cafe") == path.read_bytes()
    with pytest.raises(ValueError, match="expected L=16, got L=8"):
        load_predictor(path, L=8)
    with pytest.raises(ValueError, match="expected K=48, got K=24"):
        decode_predictor(path.read_bytes(), K=24)


def test_np_checkpoint_round_trip(small_data):
    X, y = small_data
    back = decode_predictor(encode_predictor(NoPredictor().fit(X, y)))
    np.testing.assert_array_equal(back.predict(X), X[:, -1])
