import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadcast.errors import NonFiniteError, ShapeError, TrainingDivergedError
from loadcast.gradcheck import compare
from loadcast.numkit import make_rng
from loadcast.seqmodels import DenseParams, Network, RnnParams, forward_batch, init_network
from loadcast.training import (
    AdamState,
    TrainConfig,
    adam_step,
    bptt_gradients,
    clip_by_global_norm,
    fit_params,
    global_norm,
    mse_loss,
    train,
)


def test_mse_values():
    assert mse_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse_loss([0.0, 0.0], [1.0, 3.0]) == 5.0
    with pytest.raises(ShapeError):
        mse_loss([1.0], [1.0, 2.0])


@pytest.mark.parametrize("kind", ["rnn", "lstm"])
def test_zero_gradient_at_exact_fit(kind, rng):
    net = init_network(kind, 4, 2, seed=3)
    X = rng.normal(size=(5, 6))
    Y, _ = forward_batch(net, X)
    loss, grads = bptt_gradients(net, X, Y)
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())


def test_zero_network_gradient_is_zero_when_targets_are_zero(rng):
    net = Network("rnn", RnnParams(np.zeros((3, 1)), np.zeros((3, 3))), DenseParams(np.zeros((1, 3)), np.zeros(1)))
    _, grads = bptt_gradients(net, rng.normal(size=(4, 5)), np.zeros((4, 1)))
    assert all(not g.any() for g in grads.values())


@pytest.mark.parametrize("kind", ["rnn", "lstm"])
def test_duplicated_batch_gives_same_gradient(kind, rng):
    net = init_network(kind, 3, 2, seed=8)
    X, Y = rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    l1, g1 = bptt_gradients(net, X, Y)
    l2, g2 = bptt_gradients(net, np.vstack([X, X]), np.vstack([Y, Y]))
    assert l1 == pytest.approx(l2, rel=1e-12)
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("kind", ["rnn", "lstm"])
def test_bptt_matches_finite_differences(kind, rng):
    net = init_network(kind, 3, 2, seed=1, scale=0.8)
    X, Y = rng.normal(size=(2, 5)), rng.normal(size=(2, 2))
    err = compare(lambda p, x, y: bptt_gradients(net.with_params(p), x, y), net.param_dict(), X, Y)
    assert err < 1e-6


def test_adam_first_step_is_learning_rate():
    cfg = TrainConfig(grad_clip=None)
    params = {"w": np.array([0.5, -2.0, 3.0])}
    new, state = adam_step(params, {"w": np.array([0.3, -7.0, 1e-3])}, AdamState(), cfg)
    np.testing.assert_allclose(params["w"] - new["w"], [1e-3, -1e-3, 1e-3 * 1e-3 / (1e-3 + 1e-8)], rtol=1e-6)
    assert state.t == 1


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.1, 50.0))
def test_adam_step_is_scale_invariant(g, factor):
    cfg = TrainConfig(grad_clip=None)
    p = {"w": np.zeros(1)}
    a, _ = adam_step(p, {"w": np.array([g])}, AdamState(), cfg)
    b, _ = adam_step(p, {"w": np.array([g * factor])}, AdamState(), cfg)
    assert a["w"][0] == pytest.approx(b["w"][0], rel=1e-5)


def test_adam_rejects_bad_gradients():
    cfg = TrainConfig()
    p = {"w": np.zeros(2)}
    with pytest.raises(ShapeError):
        adam_step(p, {"w": np.zeros(3)}, AdamState(), cfg)
    with pytest.raises(ShapeError):
        adam_step(p, {"v": np.zeros(2)}, AdamState(), cfg)
    with pytest.raises(NonFiniteError):
        adam_step(p, {"w": np.array([np.nan, 0.0])}, AdamState(), cfg)


def test_adam_zero_learning_rate_leaves_params(rng):
    cfg = TrainConfig(learning_rate=0.0)
    p = {"w": rng.normal(size=(3, 2))}
    new, _ = adam_step(p, {"w": rng.normal(size=(3, 2))}, AdamState(), cfg)
    np.testing.assert_array_equal(new["w"], p["w"])


def test_adam_minimises_convex_quadratic():
    target = np.array([1.5, -0.7, 0.2])
    cfg = TrainConfig(learning_rate=0.01)
    p, state = {"w": np.zeros(3)}, AdamState()
    for _ in range(5000):
        p, state = adam_step(p, {"w": 2 * (p["w"] - target)}, state, cfg)
    np.testing.assert_allclose(p["w"], target, atol=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 10.0))
def test_clipping_bounds_norm(seed, max_norm):
    r = make_rng(seed)
    grads = {"a": r.normal(size=(3, 3)) * 10, "b": r.normal(size=4)}
    clipped, pre = clip_by_global_norm(grads, max_norm)
    assert pre == pytest.approx(global_norm(grads))
    assert global_norm(clipped) <= max_norm * (1 + 1e-12)
    if pre <= max_norm:
        assert clipped is grads


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)
    TrainConfig(learning_rate=0.0)


def sine_windows(n=60, length=8):
    t = np.arange(n + length + 1)
    s = np.sin(2 * np.pi * t / 12)
    X = np.stack([s[i:i + length] for i in range(n)])
    return X, s[length:length + n, None]


@pytest.mark.parametrize("kind", ["rnn", "lstm"])
def test_training_reduces_loss(kind):
    X, Y = sine_windows()
    net = init_network(kind, 8, 1, seed=0)
    _, hist = train(net, X, Y, TrainConfig(epochs=40, batch_size=10, learning_rate=0.01))
    assert len(hist) == 40
    assert hist.losses[-1] < 0.5 * hist.losses[0]


def test_training_is_deterministic():
    X, Y = sine_windows(30)
    cfg = TrainConfig(epochs=5, batch_size=7, seed=9)
    a, ha = train(init_network("lstm", 4, 1, seed=2), X, Y, cfg)
    b, hb = train(init_network("lstm", 4, 1, seed=2), X, Y, cfg)
    assert ha.losses == hb.losses
    for k, v in a.param_dict().items():
        np.testing.assert_array_equal(v, b.param_dict()[k])


def test_training_does_not_mutate_input_network():
    X, Y = sine_windows(20)
    net = init_network("rnn", 3, 1, seed=2)
    before = {k: v.copy() for k, v in net.param_dict().items()}
    train(net, X, Y, TrainConfig(epochs=2))
    for k, v in net.param_dict().items():
        np.testing.assert_array_equal(v, before[k])


def test_zero_learning_rate_training_keeps_weights():
    X, Y = sine_windows(20)
    net = init_network("lstm", 3, 1, seed=2)
    trained, _ = train(net, X, Y, TrainConfig(epochs=3, learning_rate=0.0))
    for k, v in net.param_dict().items():
        np.testing.assert_array_equal(v, trained.param_dict()[k])


def test_divergence_reports_epoch():
    calls = {"n": 0}

    def blowup(params, X, Y):
        calls["n"] += 1
        loss = np.inf if calls["n"] > 4 else 1.0
        return loss, {"w": np.ones(1)}

    X = np.zeros((4, 2))
    with pytest.raises(TrainingDivergedError) as info:
        fit_params({"w": np.zeros(1)}, blowup, X, np.zeros((4, 1)), TrainConfig(epochs=5, batch_size=2))
    assert info.value.epoch == 3


def test_loss_history_csv(tmp_path):
    X, Y = sine_windows(10)
    _, hist = train(init_network("rnn", 2, 1), X, Y, TrainConfig(epochs=3))
    path = tmp_path / "loss.csv"
    hist.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,mean_loss"
    assert len(lines) == 4
    assert float(lines[1].split(",")[1]) == hist.losses[0]
