"""Cycle annotations, ground-truth density maps, and the counting metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError


@dataclass
class CycleAnnotation:
    """Ordered, non-overlapping action cycles as (start, end) frame pairs.

    Frames are 0-based and each cycle covers [start, end).
    """

    cycles: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        cycles = [(int(s), int(e)) for s, e in self.cycles]
        prev_end = 0
        for s, e in cycles:
            if s < 0 or e <= s:
                raise UsageError(f"invalid cycle ({s}, {e}): need 0 <= start < end")
            if s < prev_end:
                raise UsageError(f"cycle ({s}, {e}) overlaps or precedes an earlier one")
            prev_end = e
        self.cycles = cycles

    @property
    def count(self) -> int:
        return len(self.cycles)

    def validate_for(self, frames: int) -> None:
        if self.cycles and self.cycles[-1][1] > frames:
            raise UsageError(
                f"cycle {self.cycles[-1]} extends past the last frame ({frames})"
            )

    def resampled(self, raw_frames: int, frames: int) -> "CycleAnnotation":
        """Remap cycle boundaries after uniform resampling to `frames` frames."""
        self.validate_for(raw_frames)
        if raw_frames <= frames or raw_frames <= 1:
            return CycleAnnotation(list(self.cycles))
        scale = (frames - 1) / (raw_frames - 1)
        remapped = []
        prev_end = 0
        for s, e in self.cycles:
            ns = int(np.floor(s * scale + 0.5))
            ne = int(np.floor((e - 1) * scale + 0.5)) + 1
            ns = max(ns, prev_end)
            ne = max(ne, ns + 1)
            ne = min(ne, frames)
            if ns >= frames:
                break
            remapped.append((ns, ne))
            prev_end = ne
        return CycleAnnotation(remapped)


@dataclass
class CountPair:
    """Ground-truth count c and the model's real-valued count c_hat."""

    c: int
    c_hat: float


def annotations_to_density(ann: CycleAnnotation, frames: int, sigma_floor: float = 0.5) -> np.ndarray:
    """Ground-truth density map: one unit-mass truncated Gaussian per cycle.

    Each cycle [s, e) gets a Gaussian centered at (s + e - 1) / 2 with
    sigma = max((e - s) / 6, sigma_floor), discretized on the integer frames
    of the cycle and renormalized so its mass is exactly 1. The total map
    therefore sums to the cycle count.
    """
    ann.validate_for(frames)
    density = np.zeros(frames, dtype=np.float64)
    for s, e in ann.cycles:
        center = (s + e - 1) / 2.0
        sigma = max((e - s) / 6.0, sigma_floor)
        t = np.arange(s, e, dtype=np.float64)
        w = np.exp(-0.5 * ((t - center) / sigma) ** 2)
        density[s:e] += w / w.sum()
    return density


def count_from_density(density) -> float:
    # plain left-to-right accumulation so independent loop recomputations
    # reproduce the count bit for bit
    total = 0.0
    for value in np.asarray(density, dtype=np.float64).ravel():
        total += float(value)
    return total


def mae(pairs: list[CountPair]) -> float:
    """Mean of |c - c_hat| / c; undefined (usage error) when any c is zero."""
    if not pairs:
        raise UsageError("mae of an empty pair list")
    for p in pairs:
        if p.c == 0:
            raise UsageError("mae undefined for a zero ground-truth count")
    return float(np.mean([abs(p.c - p.c_hat) / p.c for p in pairs]))


def obo(pairs: list[CountPair]) -> float:
    """Fraction of pairs whose raw predicted count is within 1 of the truth."""
    if not pairs:
        raise UsageError("obo of an empty pair list")
    return float(np.mean([1.0 if abs(p.c - p.c_hat) <= 1.0 else 0.0 for p in pairs]))
