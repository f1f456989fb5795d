"""Per-frame feature sequences: ingestion, resampling, multi-scale views,
and a synthetic periodic generator for desk-scale training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .metrics import CycleAnnotation
from .tensor_io import load_tensor, save_tensor

SCALE_WINDOWS = (1, 4, 8)


@dataclass
class FeatureSequence:
    """A T x d matrix of per-frame features."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise UsageError(f"feature sequence must be T x d with T >= 1, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise UsageError("feature sequence contains non-finite values")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class ScaleSet:
    """The three same-shape per-scale sequences (windows 1, 4, 8)."""

    v1: FeatureSequence
    v2: FeatureSequence
    v3: FeatureSequence

    def __post_init__(self):
        shapes = {self.v1.values.shape, self.v2.values.shape, self.v3.values.shape}
        if len(shapes) != 1:
            raise UsageError(f"scale sequences disagree in shape: {shapes}")


@dataclass
class SyntheticSpec:
    """Recipe for one synthetic periodic video's features and cycles."""

    num_cycles: int
    cycle_length_range: tuple[int, int]
    interruption_prob: float
    noise_sigma: float
    d: int
    frames: int
    seed: int

    def __post_init__(self):
        lo, hi = self.cycle_length_range
        if self.num_cycles < 0 or lo < 1 or lo > hi:
            raise UsageError(f"bad synthetic spec: {self}")
        if not 0.0 <= self.interruption_prob <= 1.0:
            raise UsageError(f"interruption_prob {self.interruption_prob} not in [0, 1]")
        if self.noise_sigma < 0 or self.d < 1 or self.frames < 1:
            raise UsageError(f"bad synthetic spec: {self}")


def sample_or_pad(raw: FeatureSequence, frames: int) -> FeatureSequence:
    """Resample to exactly `frames` frames.

    Longer inputs are uniformly sampled with index round(i * (n-1) / (frames-1));
    shorter inputs repeat their last frame.
    """
    if frames < 1:
        raise UsageError(f"target frame count must be >= 1, got {frames}")
    n = raw.frames
    if n == frames:
        return raw
    if n > frames:
        if frames == 1:
            idx = np.array([0])
        else:
            pos = np.arange(frames, dtype=np.float64) * (n - 1) / (frames - 1)
            idx = np.floor(pos + 0.5).astype(np.int64)
        return FeatureSequence(raw.values[idx])
    pad = np.repeat(raw.values[-1:], frames - n, axis=0)
    return FeatureSequence(np.concatenate([raw.values, pad], axis=0))


def _pool_windows(values: np.ndarray, window: int, stride: int) -> np.ndarray:
    n = values.shape[0]
    starts = range(0, n - window + 1, stride)
    return np.stack([values[s : s + window].mean(axis=0) for s in starts], axis=0)


def _interp_to(values: np.ndarray, frames: int) -> np.ndarray:
    n = values.shape[0]
    if n == frames:
        return values
    if n == 1:
        return np.repeat(values, frames, axis=0)
    pos = np.arange(frames, dtype=np.float64) * (n - 1) / (frames - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    frac = (pos - lo)[:, None]
    return values[lo] * (1.0 - frac) + values[hi] * frac


def build_scales(v: FeatureSequence) -> ScaleSet:
    """Mean-pool windows of 1/4/8 frames at half-window stride, then linearly
    interpolate each pooled sequence back to the original length."""
    frames = v.frames
    outs = []
    for window in SCALE_WINDOWS:
        if window == 1:
            outs.append(FeatureSequence(v.values.copy()))
            continue
        w = min(window, frames)
        stride = max(1, w // 2)
        pooled = _pool_windows(v.values, w, stride)
        outs.append(FeatureSequence(_interp_to(pooled, frames)))
    return ScaleSet(*outs)


def _phase_path(anchors: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Piecewise-linear closed loop through the anchor vectors."""
    k = anchors.shape[0]
    u = np.mod(phase, 1.0) * k
    lo = np.floor(u).astype(np.int64) % k
    hi = (lo + 1) % k
    frac = (u - np.floor(u))[:, None]
    return anchors[lo] * (1.0 - frac) + anchors[hi] * frac


def _place_cycles(spec: SyntheticSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    lo, hi = spec.cycle_length_range
    n = spec.num_cycles
    if n * lo > spec.frames:
        raise UsageError(
            f"{n} cycles of at least {lo} frames cannot fit in {spec.frames} frames"
        )
    lengths = []
    budget = spec.frames
    for i in range(n):
        cap = budget - (n - i - 1) * lo
        lengths.append(int(rng.integers(lo, min(hi, cap) + 1)))
        budget -= lengths[-1]
    slack = spec.frames - sum(lengths)
    # interruptions: pauses between cycles; leftover slack trails the last cycle
    gaps = np.zeros(n + 1, dtype=np.int64)
    if n > 1 and slack > 0:
        inner = [i for i in range(1, n) if rng.random() < spec.interruption_prob]
        if inner:
            share = int(rng.integers(0, slack + 1))
            alloc = rng.multinomial(share, np.full(len(inner), 1.0 / len(inner)))
            for slot, amount in zip(inner, alloc):
                gaps[slot] = amount
    cycles = []
    t = 0
    for i in range(n):
        t += int(gaps[i])
        cycles.append((t, t + lengths[i]))
        t += lengths[i]
    return cycles


def generate_synthetic(spec: SyntheticSpec) -> tuple[FeatureSequence, CycleAnnotation]:
    """Deterministic periodic features plus their cycle annotation.

    Phase advances linearly inside each cycle and holds flat outside, and a
    fixed random loop through feature space maps phase to a d-vector, so
    frames at equal phase land on identical vectors before noise.
    """
    rng = np.random.default_rng(spec.seed)
    cycles = _place_cycles(spec, rng) if spec.num_cycles > 0 else []

    features = np.zeros((spec.frames, spec.d), dtype=np.float64)
    if cycles:
        anchors = rng.standard_normal((8, spec.d))
        phase = np.zeros(spec.frames, dtype=np.float64)
        for s, e in cycles:
            span = np.arange(s, e)
            phase[span] = (span - s) / (e - s)
            phase[e:] = phase[e - 1]  # hold during interruptions and after
        features += _phase_path(anchors, phase)
    if spec.noise_sigma > 0:
        features += spec.noise_sigma * rng.standard_normal((spec.frames, spec.d))
    return FeatureSequence(features), CycleAnnotation(cycles)


def save_features(path, features: FeatureSequence) -> None:
    save_tensor(path, features.values)


def load_features(path) -> FeatureSequence:
    array = load_tensor(path)
    if array.ndim != 2:
        raise UsageError(f"feature file holds a rank-{array.ndim} tensor, need T x d")
    return FeatureSequence(array)
