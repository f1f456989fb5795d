import numpy as np
import pytest

from htrm.errors import UsageError
from htrm.optim import AdamState, adam_step
from htrm.tensor import Tensor, backward

from oracles import adam_scalar_recurrence


def test_zero_gradient_leaves_parameters_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    state = AdamState.for_params([p], learning_rate=0.1)
    before = p.data.copy()
    adam_step([p], [np.zeros(3)], state)
    assert np.array_equal(p.data, before)
    assert state.step == 1


def test_first_step_moves_by_learning_rate():
    # bias-corrected first step: lr * g / (|g| + eps) for constant gradient 1
    lr = 1e-4
    p = Tensor(np.array([0.5]), requires_grad=True)
    state = AdamState.for_params([p], learning_rate=lr)
    adam_step([p], [np.ones(1)], state)
    assert abs((0.5 - p.data[0]) - lr) < 1e-10


def test_hundred_steps_on_quadratic():
    # f(w) = (w - 2)^2 from w = 0, lr = 0.1
    lr, steps = 0.1, 100
    p = Tensor(np.array([0.0]), requires_grad=True)
    state = AdamState.for_params([p], learning_rate=lr)
    for _ in range(steps):
        loss = ((p - 2.0) * (p - 2.0)).sum()
        (grad,) = backward(loss, [p])
        adam_step([p], [grad], state)
    assert abs(p.data[0] - 2.0) < 0.5
    # and the trajectory matches the bare scalar recurrence exactly
    expected = adam_scalar_recurrence(lambda w: 2 * (w - 2.0), 0.0, lr, steps)
    assert abs(p.data[0] - expected) < 1e-12


def test_shape_mismatch_rejected():
    p = Tensor(np.zeros((2, 2)), requires_grad=True)
    state = AdamState.for_params([p])
    with pytest.raises(UsageError):
        adam_step([p], [np.zeros(3)], state)


def test_moment_accumulators_share_parameter_shapes():
    params = [Tensor(np.zeros((3, 4)), requires_grad=True), Tensor(np.zeros(7), requires_grad=True)]
    state = AdamState.for_params(params)
    assert [m.shape for m in state.m] == [(3, 4), (7,)]
    assert [v.shape for v in state.v] == [(3, 4), (7,)]
