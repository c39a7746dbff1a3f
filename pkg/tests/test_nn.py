import math

import numpy as np
import pytest

import oracles
from njm import nn
from njm.errors import DivergenceError
from njm.kernels_np import sigmoid


def test_sigmoid_matches_reference():
    xs = np.linspace(-30, 30, 101)
    got = sigmoid(xs)
    want = [oracles.sigmoid(x) for x in xs]
    assert np.allclose(got, want, rtol=0, atol=1e-15)


def test_sigmoid_extreme_arguments_saturate():
    # exp(-710) underflows past the normal range; no overflow either way
    out = sigmoid(np.array([-710.0, 710.0, -1e6, 1e6]))
    assert np.all(np.isfinite(out))
    assert 0.0 <= out[0] < 1e-300
    assert out[1] == 1.0
    assert out[2] == 0.0 and out[3] == 1.0


def test_softmax_cross_entropy_uniform_logits():
    v = 7
    loss, grad = nn.softmax_cross_entropy(np.zeros(v), 3)
    assert loss == pytest.approx(math.log(v), abs=1e-15)
    want = np.full(v, 1.0 / v)
    want[3] -= 1.0
    assert np.allclose(grad, want, atol=1e-15)


def test_softmax_cross_entropy_two_class_by_hand():
    # logits (ln 3, 0), target 0: p0 = 3/4, loss = -ln(3/4)
    loss, grad = nn.softmax_cross_entropy(np.array([math.log(3.0), 0.0]), 0)
    assert loss == pytest.approx(-math.log(0.75), abs=1e-12)
    assert grad == pytest.approx([0.75 - 1.0, 0.25], abs=1e-12)


def test_softmax_cross_entropy_matches_reference():
    rng = np.random.default_rng(5)
    for _ in range(20):
        logits = rng.standard_normal(9) * 4
        target = int(rng.integers(9))
        loss, _ = nn.softmax_cross_entropy(logits, target)
        assert loss == pytest.approx(oracles.softmax_xent(logits, target), abs=1e-12)


def test_softmax_cross_entropy_rejects_bad_input():
    with pytest.raises(ValueError):
        nn.softmax_cross_entropy(np.zeros(3), 3)
    with pytest.raises(ValueError):
        nn.softmax_cross_entropy(np.array([0.0, np.nan]), 0)


def test_adam_single_step_closed_form():
    # m_hat = v_hat = g after one step, so p1 = p0 - lr/(1 + eps)
    params = {"p": np.array([1.0])}
    grads = {"p": np.array([1.0])}
    state = nn.AdamState.init(params, lr=0.1)
    nn.adam_step(params, grads, state)
    assert params["p"][0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-16)
    assert state.t == 1


def test_adam_trajectory_matches_reference():
    rng = np.random.default_rng(0)
    p0 = rng.standard_normal(6)
    gs = [rng.standard_normal(6) for _ in range(25)]
    params = {"w": p0.copy()}
    state = nn.AdamState.init(params, lr=3e-3)
    for g in gs:
        nn.adam_step(params, {"w": g.copy()}, state)
    want = oracles.adam_run(p0, gs, lr=3e-3)
    assert np.allclose(params["w"], want, rtol=1e-12, atol=1e-14)


def test_adam_rejects_non_finite_gradients():
    params = {"p": np.ones(2)}
    state = nn.AdamState.init(params)
    with pytest.raises(DivergenceError, match="non-finite gradient"):
        nn.adam_step(params, {"p": np.array([1.0, np.nan])}, state)
    assert state.t == 0   # rejected before any state mutation


def test_global_norm_is_root_sum_of_squares():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert nn.global_norm(grads) == pytest.approx(5.0, abs=1e-15)


def test_clip_rescales_only_above_threshold():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = nn.clip_global_norm(grads, 2.5)
    assert norm == pytest.approx(5.0)
    assert nn.global_norm(grads) <= 2.5 + 1e-12

    grads = {"a": np.array([0.3]), "b": np.array([0.4])}
    before = {k: v.copy() for k, v in grads.items()}
    nn.clip_global_norm(grads, 2.5)
    for k in grads:
        assert np.array_equal(grads[k], before[k])


def test_clip_none_disables():
    grads = {"a": np.full(3, 100.0)}
    nn.clip_global_norm(grads, None)
    assert np.all(grads["a"] == 100.0)


def test_grad_check_accepts_correct_quadratic_gradient():
    coef = np.arange(1.0, 7.0)
    params = {"w": np.linspace(-1, 1, 6)}
    grads = {"w": 2 * coef * params["w"]}
    err = nn.grad_check(lambda p: float(np.sum(coef * p["w"] ** 2)), params, grads)
    assert err < 1e-8


def test_grad_check_flags_wrong_gradient():
    coef = np.arange(1.0, 7.0)
    params = {"w": np.linspace(-1, 1, 6)}
    grads = {"w": 2 * coef * params["w"] + 0.5}
    err = nn.grad_check(lambda p: float(np.sum(coef * p["w"] ** 2)), params, grads)
    assert err > 1e-2


def test_init_uniform_bounds_and_determinism():
    a = nn.init_uniform((50, 3), np.random.default_rng(9), scale=0.08)
    b = nn.init_uniform((50, 3), np.random.default_rng(9), scale=0.08)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 0.08)
    assert a.std() > 0


def test_tanh_and_backward_pairs():
    x = np.array([-2.0, 0.0, 1.5])
    out = nn.tanh(x)
    assert np.allclose(out, np.tanh(x))
    g = nn.tanh_backward(np.ones_like(out), out)
    assert np.allclose(g, 1.0 - np.tanh(x) ** 2)
    s = sigmoid(x)
    gs = nn.sigmoid_backward(np.ones_like(s), s)
    assert np.allclose(gs, s * (1 - s))
