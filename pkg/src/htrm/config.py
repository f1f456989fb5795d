"""Flat UTF-8 `key = value` run configuration, fail-fast on unknown keys."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import UsageError
from .model import ModelConfig


@dataclass
class RunConfig:
    # model shape (paper defaults)
    t: int = 64
    d: int = 512
    heads: int = 4
    delta_k: int = 2
    drop_prob: float = 0.3
    use_dual_softmax: bool = True
    use_pos_embedding: bool = True
    # optimization (paper defaults; the desk-scale profile narrows these)
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    # paths
    data_dir: str = ""
    eval_dir: str = ""
    split_file: str = ""
    checkpoint: str = "model.ckpt"
    out_dir: str = "out"
    # synthetic dataset recipe
    num_videos: int = 100
    video_frames: int = 0  # 0 means: use t
    count_min: int = 2
    count_max: int = 8
    cycle_min: int = 3
    cycle_max: int = 12
    interruption_prob: float = 0.2
    noise_sigma: float = 0.05

    def validate(self) -> None:
        if self.t < 1 or self.d < 1:
            raise UsageError(f"t={self.t}, d={self.d} must be positive")
        if self.heads < 1 or self.d % self.heads != 0:
            raise UsageError(f"heads={self.heads} must divide d={self.d}")
        if self.delta_k < 0:
            raise UsageError(f"delta_k={self.delta_k} must be >= 0")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise UsageError(f"drop_prob={self.drop_prob} not in [0, 1]")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise UsageError("learning_rate must be > 0, batch_size >= 1, epochs >= 0")
        if self.num_videos < 0 or self.count_min < 0 or self.count_min > self.count_max:
            raise UsageError("bad synthetic video/count settings")
        if self.cycle_min < 1 or self.cycle_min > self.cycle_max:
            raise UsageError(f"bad cycle length range ({self.cycle_min}, {self.cycle_max})")
        if not 0.0 <= self.interruption_prob <= 1.0 or self.noise_sigma < 0:
            raise UsageError("bad interruption_prob or noise_sigma")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            frames=self.t,
            d=self.d,
            heads=self.heads,
            half_window=self.delta_k,
            drop_prob=self.drop_prob,
            use_dual_softmax=self.use_dual_softmax,
            use_pos_embedding=self.use_pos_embedding,
        )

    @property
    def synth_frames(self) -> int:
        return self.video_frames if self.video_frames > 0 else self.t


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise UsageError(f"config key {key}: expected a boolean, got {raw!r}")
    if kind == "int":
        try:
            return int(raw)
        except ValueError as err:
            raise UsageError(f"config key {key}: expected an integer, got {raw!r}") from err
    if kind == "float":
        try:
            return float(raw)
        except ValueError as err:
            raise UsageError(f"config key {key}: expected a number, got {raw!r}") from err
    return raw


def parse_config_text(text: str) -> RunConfig:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"config line {line_no}: expected `key = value`, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise UsageError(f"config line {line_no}: unknown key {key!r}")
        if key in values:
            raise UsageError(f"config line {line_no}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    config = RunConfig(**values)
    config.validate()
    return config


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(encoding="utf-8"))
