"""Bi-modal temporal self-similarity stacks and random matrix dropping.

Both builders produce a T x T x H stack: one similarity matrix per
projection head, mixed by a learned H -> H channel matrix (identity at
init, so the pre-mixing stack is what you see until training moves it).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .features import FeatureSequence
from .tensor import Tensor, add, as_tensor, matmul, mul, softmax, transpose

DEFAULT_HEADS = 4


@dataclass
class ProjectionHeads:
    """Per-head query/key projections plus the two channel-mix matrices."""

    w_q: Tensor  # (H, d, d/H)
    w_k: Tensor  # (H, d, d/H)
    w_sa: Tensor  # (H, H)
    w_ds: Tensor  # (H, H)

    @property
    def num_heads(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def create(cls, d: int, num_heads: int = DEFAULT_HEADS, rng=None) -> "ProjectionHeads":
        if num_heads < 1 or d % num_heads != 0:
            raise UsageError(f"head count {num_heads} must divide feature dim {d}")
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        dh = d // num_heads
        scale = 1.0 / np.sqrt(d)
        return cls(
            w_q=Tensor(rng.uniform(-scale, scale, (num_heads, d, dh)), requires_grad=True),
            w_k=Tensor(rng.uniform(-scale, scale, (num_heads, d, dh)), requires_grad=True),
            w_sa=Tensor(np.eye(num_heads), requires_grad=True),
            w_ds=Tensor(np.eye(num_heads), requires_grad=True),
        )

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [
            ("heads.w_q", self.w_q),
            ("heads.w_k", self.w_k),
            ("heads.w_sa", self.w_sa),
            ("heads.w_ds", self.w_ds),
        ]


def _head_logits(v, heads: ProjectionHeads) -> Tensor:
    """Q K^T per head: (H, T, T)."""
    v = as_tensor(v.values if isinstance(v, FeatureSequence) else v)
    if v.ndim != 2:
        raise UsageError(f"expected a T x d feature matrix, got {v.shape}")
    d = v.shape[1]
    if d % heads.num_heads != 0 or heads.w_q.shape[1] != d:
        raise UsageError(
            f"projections built for d={heads.w_q.shape[1]}, H={heads.num_heads} "
            f"do not fit features with d={d}"
        )
    vq = matmul(v.reshape(1, *v.shape), heads.w_q)  # (H, T, dh)
    vk = matmul(v.reshape(1, *v.shape), heads.w_k)
    return matmul(vq, transpose(vk, (0, 2, 1)))


def _mix_channels(stack: Tensor, w: Tensor) -> Tensor:
    """Apply an H -> H mix across the channel (last) axis of (T, T, H)."""
    t1, t2, h = stack.shape
    flat = matmul(stack.reshape(t1 * t2, h), transpose(w))
    return flat.reshape(t1, t2, h)


def self_attention_tssm(v, heads: ProjectionHeads) -> Tensor:
    """Row-softmax of scaled per-head correlations, stacked and channel-mixed."""
    logits = _head_logits(v, heads)
    dh = heads.w_q.shape[2]
    rows = softmax(mul(logits, 1.0 / np.sqrt(dh)), axis=2)
    return _mix_channels(transpose(rows, (1, 2, 0)), heads.w_sa)


def dual_softmax_tssm(v, heads: ProjectionHeads) -> Tensor:
    """Column-softmax times row-softmax of the raw correlations (no scaling):
    high only where a match is mutually strongest in both directions."""
    logits = _head_logits(v, heads)
    paired = mul(softmax(logits, axis=1), softmax(logits, axis=2))
    return _mix_channels(transpose(paired, (1, 2, 0)), heads.w_ds)


def joint(m_sa: Tensor, m_ds: Tensor) -> Tensor:
    """Elementwise sum of the two similarity stacks."""
    m_sa, m_ds = as_tensor(m_sa), as_tensor(m_ds)
    if m_sa.shape != m_ds.shape:
        raise UsageError(f"joint: shapes {m_sa.shape} and {m_ds.shape} differ")
    return add(m_sa, m_ds)


@dataclass
class RmdPolicy:
    """Random matrix dropping policy; owns its RNG, one per trainer."""

    p: float = 0.3
    training: bool = False
    seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise UsageError(f"drop probability {self.p} not in [0, 1]")
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)


def random_matrix_drop(m: Tensor, policy: RmdPolicy) -> Tensor:
    """Training-time only: with probability p zero one whole channel.

    At most one channel per call; survivors are left unscaled and the
    dropped channel blocks gradient flow entirely. Inference is the
    bit-exact identity.
    """
    m = as_tensor(m)
    if m.ndim < 1 or m.shape[-1] < 1:
        raise UsageError(f"similarity stack needs at least one channel, got {m.shape}")
    if not policy.training or policy.p == 0.0:
        return m
    if policy.rng.random() >= policy.p:
        return m
    channels = m.shape[-1]
    dropped = int(policy.rng.integers(channels))
    mask = np.ones(channels)
    mask[dropped] = 0.0
    return mul(m, mask)
