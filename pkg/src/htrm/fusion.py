"""Multi-scale fusion of the per-scale similarity stacks.

Each T x T x 5 stack is treated as a 5 x T x T volume and passed through a
same-padded volumetric conv (window 1/3/5 per scale) with a ReLU. The three
results concatenate to 15 channels, go through a grouped reduction conv
whose depth-3 window spans the scale axis, and the concatenated original
stacks are added back as a residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .tensor import Tensor, as_tensor, concat, conv_same, relu

SCALE_KERNELS = (1, 3, 5)
NUM_SCALES = 3


@dataclass
class FusionParams:
    scale_kernels: list[Tensor]  # (k, k, k) for k in 1, 3, 5
    scale_biases: list[Tensor]  # scalars
    reduce_kernels: Tensor  # (groups, 3, 3, 3), one group per in-scale channel
    reduce_biases: Tensor  # (groups,)

    @property
    def groups(self) -> int:
        return self.reduce_kernels.shape[0]

    @classmethod
    def create(cls, channels: int = 5, rng=None) -> "FusionParams":
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        kernels, biases = [], []
        for k in SCALE_KERNELS:
            kernels.append(Tensor(rng.uniform(-0.05, 0.05, (k, k, k)), requires_grad=True))
            biases.append(Tensor(np.zeros(()), requires_grad=True))
        # near-zero reduction keeps early training on the residual path
        reduce_init = 0.01 * rng.uniform(-1.0, 1.0, (channels, 3, 3, 3))
        return cls(
            scale_kernels=kernels,
            scale_biases=biases,
            reduce_kernels=Tensor(reduce_init, requires_grad=True),
            reduce_biases=Tensor(np.zeros(channels), requires_grad=True),
        )

    def parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for i, (k, b) in enumerate(zip(self.scale_kernels, self.scale_biases), start=1):
            named.append((f"fusion.scale{i}_kernel", k))
            named.append((f"fusion.scale{i}_bias", b))
        named.append(("fusion.reduce_kernels", self.reduce_kernels))
        named.append(("fusion.reduce_biases", self.reduce_biases))
        return named


def multiscale_fuse(m1, m2, m3, params: FusionParams) -> Tensor:
    """Fuse three T x T x C stacks into one T x T x 3C stack."""
    stacks = [as_tensor(m) for m in (m1, m2, m3)]
    shapes = {s.shape for s in stacks}
    if len(shapes) != 1 or stacks[0].ndim != 3:
        raise UsageError(f"fusion expects three equal T x T x C stacks, got {shapes}")
    frames, _, channels = stacks[0].shape
    if channels != params.groups:
        raise UsageError(
            f"fusion built for {params.groups}-channel stacks, got {channels}"
        )

    volumes = [s.transpose(2, 0, 1) for s in stacks]  # (C, T, T)
    mixed = [
        relu(conv_same(vol, k) + b)
        for vol, k, b in zip(volumes, params.scale_kernels, params.scale_biases)
    ]
    cat = concat(mixed, axis=0)  # (3C, T, T), scale-major channel order

    group_outs = []
    for g in range(channels):
        vol = cat[g::channels]  # the g-th channel of every scale: (3, T, T)
        out = conv_same(vol, params.reduce_kernels[g]) + params.reduce_biases[g]
        group_outs.append(out.reshape(1, NUM_SCALES, frames, frames))
    reduced = concat(group_outs, axis=0)  # (C, 3, T, T)
    reduced = reduced.transpose(1, 0, 2, 3).reshape(NUM_SCALES * channels, frames, frames)

    residual = concat(volumes, axis=0)
    return (reduced + residual).transpose(1, 2, 0)  # (T, T, 3C)
