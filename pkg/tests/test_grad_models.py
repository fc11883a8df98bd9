from __future__ import annotations

import numpy as np
import pytest

from procrustes_leak.errors import InvalidSpec, ShapeMismatch
from procrustes_leak.grad_models import (
    AdamState,
    ConvSpec,
    TrainSpec,
    adam_step,
    conv_effective_linear,
    conv_forward,
    conv_from_linear,
    conv_loss_grads,
    init_conv,
    init_linear,
    linear_forward,
    linear_loss_grads,
    read_weights,
    train_conv,
    train_linear,
    write_weights,
)
from procrustes_leak.simulator import SimConfig, simulate
from procrustes_leak.split_align import align_clean, split
from procrustes_leak.stat_models import ols_fit


def finite_difference(loss, params, name, i, h=1e-5):
    plus = {k: v.copy() for k, v in params.items()}
    minus = {k: v.copy() for k, v in params.items()}
    plus[name].flat[i] += h
    minus[name].flat[i] -= h
    return (loss(plus) - loss(minus)) / (2 * h)


def assert_grads_match(loss_grads, params, X, y):
    _, grads = loss_grads(params, X, y)
    for name, value in params.items():
        for i in range(value.size):
            fd = finite_difference(lambda q: loss_grads(q, X, y)[0], params, name, i)
            an = grads[name].flat[i]
            assert abs(an - fd) <= 1e-4 * max(abs(fd), abs(an), 1e-6), (name, i, an, fd)


# -- Adam ----------------------------------------------------------------------


def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(params, {"w": np.zeros(2)}, AdamState(), TrainSpec())
    assert np.array_equal(new["w"], params["w"]) and state.t == 1


def test_adam_constant_gradient_trace():
    # with a constant gradient both bias-corrected moments are exact: m_hat = g, v_hat = g^2,
    # so every step moves by lr * g / (|g| + eps)
    spec = TrainSpec(learning_rate=0.01)
    params = {"w": np.array([0.0, 0.0])}
    g = np.array([3.0, -0.5])
    state = AdamState()
    for _ in range(50):
        prev = params["w"]
        params, state = adam_step(params, {"w": g}, state, spec)
        assert np.allclose(params["w"] - prev, -spec.learning_rate * g / (np.abs(g) + spec.adam_eps), rtol=1e-9, atol=0)


def test_adam_no_cross_talk():
    spec = TrainSpec(learning_rate=0.1)
    p = {"a": np.array([1.0]), "b": np.array([1.0])}
    out1, _ = adam_step(p, {"a": np.array([2.0]), "b": np.array([0.5])}, AdamState(), spec)
    out2, _ = adam_step(p, {"a": np.array([2.0]), "b": np.array([-7.0])}, AdamState(), spec)
    assert out1["a"] == out2["a"]


def test_adam_does_not_mutate_inputs():
    p = {"w": np.array([1.0, 2.0])}
    state = AdamState()
    adam_step(p, {"w": np.array([1.0, 1.0])}, state, TrainSpec())
    assert np.array_equal(p["w"], [1.0, 2.0]) and state.t == 0 and not state.m


# -- gradients -----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_linear_gradients(seed):
    g = np.random.default_rng(seed)
    X, y = g.normal(size=(8, 10)), g.normal(size=8)
    assert_grads_match(linear_loss_grads, init_linear(10, g), X, y)


@pytest.mark.parametrize("span", [5, 3, 1])
@pytest.mark.parametrize("seed", range(3))
def test_conv_gradients(seed, span):
    g = np.random.default_rng(seed)
    X, y = g.normal(size=(8, 5, 2)), g.normal(size=8)
    params = init_conv(5, 2, ConvSpec(channels=3, kernel_span=span), g)
    assert_grads_match(conv_loss_grads, params, X, y)


# -- model relations -----------------------------------------------------------


@pytest.mark.parametrize("span", [6, 4, 1])
@pytest.mark.parametrize("k", [2, 3])
def test_conv_effective_linear_matches_forward(span, k, rng):
    params = init_conv(6, k, ConvSpec(channels=4, kernel_span=span), rng)
    X = rng.normal(size=(9, 6, k))
    w, b = conv_effective_linear(params, 6, k)
    assert np.allclose(conv_forward(params, X), X.reshape(9, -1) @ w + b, atol=1e-10)


@pytest.mark.parametrize("channels", [1, 4])
def test_conv_contains_linear_model(channels, rng):
    lin = init_linear(12, rng)
    conv = conv_from_linear(lin["weight"], lin["bias"][0], 6, 2, channels)
    X = rng.normal(size=(20, 6, 2))
    y = rng.normal(size=20)
    assert np.allclose(conv_forward(conv, X), linear_forward(lin, X.reshape(20, -1)), atol=1e-8)
    assert conv_loss_grads(conv, X, y)[0] == pytest.approx(linear_loss_grads(lin, X.reshape(20, -1), y)[0], abs=1e-8)


def test_kernel_span_too_large():
    with pytest.raises(InvalidSpec):
        ConvSpec(kernel_span=7).span(6)
    with pytest.raises(InvalidSpec):
        train_conv(np.zeros((4, 6, 2)), np.zeros(4), conv=ConvSpec(kernel_span=9))


def test_train_spec_validation():
    with pytest.raises(InvalidSpec):
        TrainSpec(epochs=0)
    with pytest.raises(InvalidSpec):
        TrainSpec(batch_size=0)


# -- training ------------------------------------------------------------------


def test_linear_converges_to_ols(rng):
    X = rng.normal(size=(100, 5))
    y = X @ [0.5, -1.0, 2.0, 0.0, 1.5] + 3.0
    fit = train_linear(X, y, TrainSpec(epochs=400, batch_size=20, learning_rate=0.05))
    assert fit.train_rmse < 0.01
    ols = ols_fit(X, y)
    assert np.allclose(fit.predict(X), ols.predict(X), atol=0.05)


def test_zero_learning_rate_keeps_initialisation(rng):
    X, y = rng.normal(size=(30, 8)), rng.normal(size=30)
    spec = TrainSpec(epochs=3, learning_rate=0.0, seed=5)
    fit = train_linear(X, y, spec)
    init = init_linear(8, np.random.default_rng(5))
    assert all(np.array_equal(fit.params[k], init[k]) for k in init)
    fit = train_conv(X.reshape(30, 4, 2), y, spec)
    init = init_conv(4, 2, ConvSpec(), np.random.default_rng(5))
    assert all(np.array_equal(fit.params[k], init[k]) for k in init)


def test_training_is_deterministic(rng):
    X, y = rng.normal(size=(40, 5, 2)), rng.normal(size=40)
    a, b = train_conv(X, y, TrainSpec(epochs=5, seed=2)), train_conv(X, y, TrainSpec(epochs=5, seed=2))
    assert a.coefficients.tobytes() == b.coefficients.tobytes() and a.history == b.history
    c = train_linear(X.reshape(40, -1), y, TrainSpec(epochs=5, seed=2))
    d = train_linear(X.reshape(40, -1), y, TrainSpec(epochs=5, seed=2))
    assert c.coefficients.tobytes() == d.coefficients.tobytes()


def test_effective_coefficients_act_on_raw_input(rng):
    X = rng.normal(loc=5.0, scale=3.0, size=(30, 4, 2))
    y = rng.normal(size=30)
    fit = train_conv(X, y, TrainSpec(epochs=3))
    from procrustes_leak.grad_models import Standardizer

    std = Standardizer.fit(X.reshape(30, -1))
    direct = conv_forward(fit.params, std.transform(X.reshape(30, -1)).reshape(30, 4, 2))
    assert np.allclose(fit.predict(X.reshape(30, -1)), direct, atol=1e-10)


def test_loss_nonincreasing_on_default_data():
    monotone = 0
    runs = 20
    for s in range(runs):
        sm = simulate(SimConfig(n=100, p=32, seed=s))
        idx = split(100, 0.7, s)
        tr, te = list(idx.train_ids), list(idx.test_ids)
        al = align_clean(sm.coords[tr], sm.coords[te])
        y = sm.size_factors[tr]
        for fit in (train_linear(al.train.reshape(len(tr), -1), y, TrainSpec(seed=s)), train_conv(al.train, y, TrainSpec(seed=s))):
            monotone += bool(np.all(np.diff(fit.history) <= 0))
    assert monotone >= 0.95 * 2 * runs


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        train_linear(np.zeros((5, 3)), np.zeros(4))
    with pytest.raises(ShapeMismatch):
        train_conv(np.zeros((5, 6)), np.zeros(5))


def test_weights_round_trip(tmp_path, rng):
    params = init_conv(5, 2, ConvSpec(channels=3), rng)
    write_weights(tmp_path / "w.csv", params)
    assert (tmp_path / "w.csv").read_text().startswith("layer,index,value\n")
    back = read_weights(tmp_path / "w.csv", {k: v.shape for k, v in params.items()})
    assert all(np.array_equal(back[k], params[k]) for k in params)
