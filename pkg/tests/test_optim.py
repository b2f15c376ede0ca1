import numpy as np
import numpy.testing as npt
import pytest

from tcanlab.autodiff import Tensor
from tcanlab.optim import AdamState, adam_step, zero_grads


def adam_reference(g_trace, x0, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam recurrences on a scalar, step by step."""
    m = v = 0.0
    x = x0
    xs = []
    for t, g in enumerate(g_trace, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
        xs.append(x)
    return xs


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    state = AdamState.for_params([p])
    adam_step([p], [np.zeros(3)], state, lr=0.1)
    npt.assert_array_equal(p.data, [1.0, -2.0, 3.0])
    assert state.t == 1
    adam_step([p], [None], state, lr=0.1)
    npt.assert_array_equal(p.data, [1.0, -2.0, 3.0])
    assert state.t == 2


def test_first_step_is_sign_scaled():
    for g in (0.3, -42.0, 1e-4):
        p = Tensor(np.array([0.0]), requires_grad=True)
        state = AdamState.for_params([p])
        adam_step([p], [np.array([g])], state, lr=0.001)
        expected = -0.001 * g / (abs(g) + state.epsilon)
        npt.assert_allclose(p.data, [expected], rtol=1e-12)
        npt.assert_allclose(p.data, [-0.001 * np.sign(g)], rtol=1e-3)


def test_three_step_trace_matches_reference():
    # gradient of f(x) = x^2 evaluated at the current iterate each step
    lr = 0.05
    p = Tensor(np.array([1.5]), requires_grad=True)
    state = AdamState.for_params([p])
    xs, gs = [], []
    for _ in range(3):
        g = 2.0 * float(p.data[0])
        gs.append(g)
        adam_step([p], [np.array([g])], state, lr=lr)
        xs.append(float(p.data[0]))
    expected = adam_reference(gs, 1.5, lr)
    npt.assert_allclose(xs, expected, atol=1e-12)
    assert state.t == 3


def test_moments_track_shapes_and_v_nonnegative():
    rng = np.random.default_rng(0)
    params = [Tensor(rng.standard_normal((3, 2)), requires_grad=True),
              Tensor(rng.standard_normal(4), requires_grad=True)]
    state = AdamState.for_params(params)
    for _ in range(5):
        adam_step(params, [rng.standard_normal(p.data.shape) for p in params], state, lr=0.01)
    for m, v, p in zip(state.m, state.v, params):
        assert m.shape == p.data.shape and v.shape == p.data.shape
        assert (v >= 0).all()
    assert state.t == 5


def test_adam_argument_validation():
    p = Tensor(np.zeros(2), requires_grad=True)
    state = AdamState.for_params([p])
    with pytest.raises(ValueError):
        adam_step([p], [np.zeros(2)], state, lr=0.0)
    with pytest.raises(ValueError):
        adam_step([p], [np.zeros(3)], state, lr=0.1)
    with pytest.raises(ValueError):
        adam_step([p], [], state, lr=0.1)


def test_zero_grads():
    p = Tensor(np.zeros(2), requires_grad=True)
    p.grad = np.ones(2)
    zero_grads([p])
    assert p.grad is None
