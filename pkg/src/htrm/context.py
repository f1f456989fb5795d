"""Local temporal context: per-channel temporal filtering followed by a
pointwise projection onto a length-T vector per frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .features import FeatureSequence
from .tensor import Tensor, as_tensor, concat, conv_same, matmul


@dataclass
class ContextParams:
    """One temporal filter per feature channel, then a d -> T projection."""

    depthwise: Tensor  # (2*dk + 1, d)
    depthwise_bias: Tensor  # (d,)
    pointwise: Tensor  # (d, T)
    pointwise_bias: Tensor  # (T,)

    @property
    def half_window(self) -> int:
        return (self.depthwise.shape[0] - 1) // 2

    @classmethod
    def create(cls, d: int, frames: int, half_window: int = 2, rng=None) -> "ContextParams":
        if half_window < 0:
            raise UsageError(f"half window must be >= 0, got {half_window}")
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        width = 2 * half_window + 1
        # centered averaging filter plus a little noise to break symmetry
        depthwise = np.full((width, d), 1.0 / width) + 0.01 * rng.standard_normal((width, d))
        scale = 1.0 / np.sqrt(d)
        return cls(
            depthwise=Tensor(depthwise, requires_grad=True),
            depthwise_bias=Tensor(np.zeros(d), requires_grad=True),
            pointwise=Tensor(rng.uniform(-scale, scale, (d, frames)), requires_grad=True),
            pointwise_bias=Tensor(np.zeros(frames), requires_grad=True),
        )

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [
            ("context.depthwise", self.depthwise),
            ("context.depthwise_bias", self.depthwise_bias),
            ("context.pointwise", self.pointwise),
            ("context.pointwise_bias", self.pointwise_bias),
        ]


def local_temporal_context(v, params: ContextParams) -> Tensor:
    """Zero-padded depthwise temporal conv, then a pointwise d -> T map.

    Frame t's projected T-vector becomes row t of the returned T x T x 1
    context stack.
    """
    x = as_tensor(v.values if isinstance(v, FeatureSequence) else v)
    if x.ndim != 2:
        raise UsageError(f"expected a T x d feature matrix, got {x.shape}")
    frames, d = x.shape
    if params.pointwise.shape != (d, frames):
        raise UsageError(
            f"pointwise kernel {params.pointwise.shape} does not map "
            f"d={d} features onto T={frames} frames"
        )
    filtered = conv_same(x, params.depthwise, dims=(0,)) + params.depthwise_bias
    rows = matmul(filtered, params.pointwise) + params.pointwise_bias
    return rows.reshape(frames, frames, 1)


def inject_context(m_joint: Tensor, ctx: Tensor) -> Tensor:
    """Concatenate the context stack as the last channel."""
    m_joint, ctx = as_tensor(m_joint), as_tensor(ctx)
    if m_joint.ndim != 3 or ctx.ndim != 3 or m_joint.shape[:2] != ctx.shape[:2]:
        raise UsageError(
            f"cannot inject context {ctx.shape} into stack {m_joint.shape}"
        )
    return concat([m_joint, ctx], axis=2)
