"""Adam with bias correction, operating on tensor parameter lists."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus the step counter."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], learning_rate: float = 1e-4, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> AdamState:
    """One Adam update in place; returns the advanced state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise UsageError(
            f"adam_step: {len(params)} params, {len(grads)} grads, "
            f"{len(state.m)} moment slots"
        )
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise UsageError(
                f"adam_step: grad shape {g.shape} does not match param {p.data.shape}"
            )
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data = p.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state
