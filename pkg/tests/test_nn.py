import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wingbeat.errors import ShapeError
from wingbeat.nn import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    Network,
    OptimizerState,
    backward,
    categorical_cross_entropy,
    conv2d_forward,
    dense_forward,
    dropout_forward,
    load_checkpoint,
    maxpool2d_forward,
    one_hot,
    rmsprop_step,
    save_checkpoint,
    train,
)
from wingbeat.nn.gradcheck import check_gradients, random_architecture, random_batch
from wingbeat.nn.network import TrainedModel


# --- forward ops -----------------------------------------------------------

def test_conv_shape_60x40():
    w = np.zeros((3, 3, 1, 4))
    assert conv2d_forward(np.zeros((60, 40, 1)), w, np.zeros(4)).shape == (58, 38, 4)


def test_conv_identity_kernel(rng):
    x = rng.normal(size=(5, 4, 1))
    out = conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(out, x)


def test_conv_ones():
    out = conv2d_forward(np.ones((3, 3, 1)), np.ones((3, 3, 1, 1)), np.zeros(1))
    assert out.shape == (1, 1, 1) and out.item() == 9


def test_conv_matches_direct_loop(rng):
    x = rng.normal(size=(6, 5, 2))
    w = rng.normal(size=(3, 2, 2, 3))
    b = rng.normal(size=3)
    out = conv2d_forward(x, w, b)
    for i in range(4):
        for j in range(4):
            for f in range(3):
                ref = np.sum(x[i : i + 3, j : j + 2, :] * w[..., f]) + b[f]
                assert out[i, j, f] == pytest.approx(ref)


def test_conv_kernel_too_big():
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((2, 2, 1)), np.zeros((3, 3, 1, 1)), np.zeros(1))


def test_maxpool_examples():
    out, _ = maxpool2d_forward(np.zeros((58, 38, 1)))
    assert out.shape == (57, 37, 1)
    out, _ = maxpool2d_forward(np.full((4, 4, 2), 3.0))
    assert (out == 3.0).all()
    out, _ = maxpool2d_forward(np.array([[1.0, 2.0], [3.0, 4.0]])[..., None])
    assert out.item() == 4


def test_dense_examples(rng):
    x = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(dense_forward(x, np.eye(4), np.zeros(4)), x)
    np.testing.assert_allclose(dense_forward(np.zeros((1, 2)), np.eye(2), np.zeros(2), "softmax"), [[0.5, 0.5]])
    assert dense_forward(np.zeros((1, 1)), np.eye(1), np.zeros(1), "sigmoid").item() == 0.5
    with pytest.raises(ShapeError):
        dense_forward(x, np.eye(3), np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(z=st.lists(st.floats(-200, 200), min_size=2, max_size=30))
def test_softmax_and_sigmoid_ranges(z):
    z = np.array([z])
    w = np.eye(z.shape[1])
    s = dense_forward(z, w, np.zeros(z.shape[1]), "softmax")
    assert abs(s.sum() - 1) < 1e-6
    sig = dense_forward(np.clip(z, -30, 30), w, np.zeros(z.shape[1]), "sigmoid")
    assert ((sig > 0) & (sig < 1)).all()


def test_sigmoid_float32_tail_stays_positive():
    z = np.array([[-60.0, 60.0]], dtype=np.float32)
    s = dense_forward(z, np.eye(2, dtype=np.float32), np.zeros(2, np.float32), "sigmoid")
    assert s[0, 0] > 0


def test_dropout(rng):
    x = rng.normal(size=(100000,)) + 3
    np.testing.assert_array_equal(dropout_forward(x, 0.0, "train", rng), x)
    np.testing.assert_array_equal(dropout_forward(x, 0.5, "eval"), x)
    y = dropout_forward(x, 0.5, "train", np.random.default_rng(0))
    assert abs(y.mean() - x.mean()) < 0.05 * abs(x.mean())
    kept = y != 0
    np.testing.assert_allclose(y[kept], 2 * x[kept])
    assert 0.49 < kept.mean() < 0.51


# --- loss ------------------------------------------------------------------

@pytest.mark.parametrize(
    "y,p,expect",
    [([1, 0], [1.0, 0.0], 0.0), ([1, 0], [0.5, 0.5], math.log(2)), ([0, 1], [0.9, 0.1], -math.log(0.1))],
)
def test_cross_entropy_values(y, p, expect):
    assert categorical_cross_entropy(np.array([p]), np.array([y])) == pytest.approx(expect, abs=1e-12)


def test_uniform_predictor_gives_log_c():
    for c in (2, 5, 23):
        assert categorical_cross_entropy(np.full((4, c), 1 / c), one_hot([0, 1, 1, 0], c)) == pytest.approx(math.log(c))


def test_clamp_keeps_loss_finite():
    assert categorical_cross_entropy(np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]])) == pytest.approx(-math.log(1e-12))


def test_softmax_dense_gradient_closed_form(rng):
    net = Network([Dense(3, "softmax")], (4,), seed=1, dtype=np.float64)
    x = rng.normal(size=(5, 4))
    y = one_hot(rng.integers(0, 3, 5), 3, np.float64)
    _, grads = backward(net, x, y)
    p = net.forward(x)
    g = dict(((k), v) for _, k, v in grads)
    np.testing.assert_allclose(g["W"], x.T @ (p - y) / 5, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(g["b"], (p - y).sum(axis=0) / 5, rtol=1e-12, atol=1e-15)


def test_zero_weights_symmetric_targets_zero_gradient(rng):
    net = Network([Conv2D(2, 2, 2, "none"), Flatten(), Dense(2, "softmax")], (4, 4, 1), seed=0, dtype=np.float64)
    for _, _, p in net.parameters():
        p[...] = 0
    x = rng.normal(size=(2, 4, 4, 1))
    _, grads = backward(net, x, np.array([[1.0, 0.0], [0.0, 1.0]]))
    for i, k, g in grads:
        if i == 0 or k == "W":
            assert not g.any()


# --- gradient check --------------------------------------------------------

def test_gradcheck_random_architectures():
    rng = np.random.default_rng(2024)
    for _ in range(5):
        net = random_architecture(rng)
        assert net.n_parameters() <= 1000
        x, y = random_batch(net, rng)
        res = check_gradients(net, x, y, rng)
        assert res.n_checked >= 100
        assert res.max_rel_error < 1e-4


def test_gradcheck_catches_a_wrong_gradient():
    rng = np.random.default_rng(5)
    net = Network([Flatten(), Dense(4, "sigmoid"), Dense(2, "softmax")], (3, 3, 1), seed=0, dtype=np.float64)
    x, y = random_batch(net, rng)
    layer = net.layers[1]
    orig = layer.backward

    def broken(da, need_dx=True):
        out = orig(da, need_dx)
        layer.grads["W"] = layer.grads["W"] * 1.01
        return out

    layer.backward = broken
    assert check_gradients(net, x, y, rng).max_rel_error > 1e-3


# --- optimizer -------------------------------------------------------------

def test_rmsprop_single_step():
    p = {"w": np.zeros(1)}
    state = OptimizerState()
    rmsprop_step(p, {"w": np.ones(1)}, state)
    assert state.accumulators["w"][0] == pytest.approx(0.1)
    assert -p["w"][0] == pytest.approx(0.001 / (math.sqrt(0.1) + 1e-7), rel=1e-12)
    assert -p["w"][0] == pytest.approx(0.0031623, abs=1e-7)


def test_rmsprop_two_steps_and_zero_grad():
    p = {"w": np.array([2.0])}
    state = OptimizerState()
    rmsprop_step(p, {"w": np.zeros(1)}, state)
    assert p["w"][0] == 2.0
    state = OptimizerState()
    for _ in range(2):
        rmsprop_step(p, {"w": np.ones(1)}, state)
    assert state.accumulators["w"][0] == pytest.approx(0.19)


@settings(max_examples=50, deadline=None)
@given(g=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=10), steps=st.integers(1, 5))
def test_rmsprop_matches_scalar_recurrence(g, steps):
    g = np.array(g)
    p = {"w": np.zeros_like(g)}
    state = OptimizerState()
    v = np.zeros_like(g)
    theta = np.zeros_like(g)
    for _ in range(steps):
        rmsprop_step(p, {"w": g}, state)
        v = 0.9 * v + 0.1 * g * g
        theta = theta - 0.001 * g / (np.sqrt(v) + 1e-7)
    np.testing.assert_allclose(p["w"], theta, rtol=1e-12, atol=1e-15)


# --- training --------------------------------------------------------------

def _tiny_net(seed=0, dropout=0.5):
    return Network(
        [Conv2D(4, 3, 3, "relu"), MaxPool2D(2, 2, 1), Flatten(), Dense(8, "relu"), Dropout(dropout), Dense(2, "softmax")],
        (8, 6, 1),
        seed=seed,
    )


def _separable(rng, n=64):
    y = np.arange(n) % 2
    x = rng.random((n, 8, 6, 1)).astype(np.float32) * 0.2
    x[y == 0, :4] += 0.8
    x[y == 1, 4:] += 0.8
    return x, y


def test_training_is_deterministic(rng):
    x, y = _separable(rng)
    a = train(_tiny_net(), x, one_hot(y, 2), epochs=3, seed=9)
    b = train(_tiny_net(), x, one_hot(y, 2), epochs=3, seed=9)
    for (_, _, pa), (_, _, pb) in zip(a.network.parameters(), b.network.parameters()):
        assert pa.tobytes() == pb.tobytes()
    assert a.metadata["loss_curve"] == b.metadata["loss_curve"]
    assert a.metadata["seed"] == 9 and a.metadata["learning_rate"] == 0.001


def test_training_separates_classes(rng):
    x, y = _separable(rng)
    model = train(_tiny_net(), x, one_hot(y, 2), epochs=10, batch_size=8, seed=0)
    acc = (model.predict(x).argmax(axis=1) == y).mean()
    assert acc >= 0.99


def test_single_example_loss_decreases(rng):
    # dropout off: with one example its mask noise swamps the per-step decrease
    x, y = _separable(rng, n=1)
    model = train(_tiny_net(3, dropout=0.0), x, one_hot(y, 2), epochs=3, seed=1)
    c = model.metadata["loss_curve"]
    assert c[0] > c[1] > c[2]


def test_partial_batch_kept(rng):
    x, y = _separable(rng, n=10)
    net = _tiny_net()
    before = [p.copy() for _, _, p in net.parameters()]
    train(net, x, one_hot(y, 2), epochs=1, batch_size=32, seed=0)
    assert any(not np.array_equal(a, p) for a, (_, _, p) in zip(before, net.parameters()))


def test_eval_forward_is_pure(rng):
    net = _tiny_net()
    x = rng.random((3, 8, 6, 1))
    np.testing.assert_array_equal(net.forward(x), net.forward(x))


def test_network_shape_errors():
    with pytest.raises(ShapeError, match="layer 1"):
        Network([Flatten(), Conv2D(1, 2, 2)], (4, 4, 1))
    with pytest.raises(ShapeError, match="add a flatten"):
        Network([Dense(2)], (4, 4, 1))
    with pytest.raises(ShapeError):
        _tiny_net().forward(np.zeros((1, 5, 5, 1)))


def test_checkpoint_round_trip(tmp_path, rng):
    net = _tiny_net(4)
    model = TrainedModel(net, {"note": "x", "seed": 4})
    save_checkpoint(tmp_path / "m.wbm", model)
    back = load_checkpoint(tmp_path / "m.wbm")
    assert back.metadata["note"] == "x"
    assert back.network.specs() == net.specs()
    x = rng.random((2, 8, 6, 1))
    np.testing.assert_array_equal(back.predict(x), model.predict(x))
    raw = (tmp_path / "m.wbm").read_bytes()
    (tmp_path / "bad.wbm").write_bytes(raw[:-4])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.wbm")
