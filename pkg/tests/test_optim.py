import numpy as np
import pytest

from urban_acoustics.layers import softmax_cross_entropy
from urban_acoustics.model import backward, forward, init_params, tiny_config
from urban_acoustics.optim import init_adam, adam_step


def toy_params(rng):
    return {
        "a": rng.standard_normal((3, 4)),
        "b": rng.standard_normal(5),
    }


def test_first_step_is_signed_lr():
    # with zero state, m_hat/sqrt(v_hat) == sign(g) up to eps
    rng = np.random.default_rng(0)
    params = toy_params(rng)
    before = {k: v.copy() for k, v in params.items()}
    grads = {k: rng.standard_normal(v.shape) + 0.5 for k, v in params.items()}
    state = init_adam(params, lr=1e-3)
    adam_step(params, grads, state)
    for k in params:
        step = before[k] - params[k]
        np.testing.assert_allclose(step, 1e-3 * np.sign(grads[k]), rtol=1e-4)
    assert state.t == 1


def test_zero_grad_leaves_params_and_bumps_t():
    rng = np.random.default_rng(1)
    params = toy_params(rng)
    before = {k: v.copy() for k, v in params.items()}
    state = init_adam(params)
    adam_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state)
    adam_step(params, {k: np.zeros_like(v) for k, v in params.items()}, state)
    assert state.t == 2
    for k in params:
        np.testing.assert_array_equal(params[k], before[k])


def test_equal_grads_give_identical_updates():
    params = {"x": np.full(4, 2.0), "y": np.full(4, -7.0)}
    grads = {"x": np.full(4, 0.3), "y": np.full(4, 0.3)}
    state = init_adam(params, lr=0.01)
    for _ in range(5):
        adam_step(params, grads, state)
    np.testing.assert_allclose(params["x"] - 2.0, params["y"] + 7.0, rtol=1e-12)


def test_missing_grad_rejected():
    params = {"a": np.zeros(2), "b": np.zeros(2)}
    state = init_adam(params)
    with pytest.raises(ValueError, match="'b'"):
        adam_step(params, {"a": np.zeros(2)}, state)
    assert state.t == 0  # rejected call must not consume a step


def test_update_is_in_place():
    params = {"a": np.ones(3)}
    ref = params["a"]
    state = init_adam(params)
    adam_step(params, {"a": np.ones(3)}, state)
    assert params["a"] is ref


def test_single_step_decreases_quadratic_loss():
    # f(p) = 0.5*|p|^2, grad = p; one small step must reduce it for any seed
    for seed in range(10):
        rng = np.random.default_rng(seed)
        p = {"w": rng.standard_normal(20) * 3}
        loss0 = 0.5 * float(p["w"] @ p["w"])
        state = init_adam(p, lr=1e-2)
        adam_step(p, {"w": p["w"].copy()}, state)
        loss1 = 0.5 * float(p["w"] @ p["w"])
        assert loss1 < loss0


def test_fifty_steps_train_tiny_model():
    model = init_params(tiny_config(num_classes=3), seed=3, dtype=np.float64)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 2, 8, 12))
    labels = np.array([0, 1, 2, 0, 1, 2])
    state = init_adam(model.params, lr=1e-2)
    first = None
    for _ in range(50):
        logits, caches = forward(model, x, training=True, return_caches=True)
        loss, grad = softmax_cross_entropy(logits, labels)
        if first is None:
            first = loss
        grads = backward(model, caches, grad)
        adam_step(model.params, grads, state)
    assert state.t == 50
    assert loss < 0.1 * first
