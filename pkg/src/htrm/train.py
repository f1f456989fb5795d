"""Mini-batch Adam training on the density-map regression loss.

Fully deterministic under a seed: parameter init, batch order, and matrix
dropping each draw from their own stream spawned from the run seed, and
batch losses are accumulated in index order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import VideoRecord
from .features import ScaleSet, build_scales, sample_or_pad
from .metrics import CountPair, annotations_to_density, count_from_density, mae, obo
from .model import ModelConfig, ModelParams, forward_full, init_model, mse_loss
from .optim import AdamState, adam_step
from .tensor import backward
from .tssm import RmdPolicy


@dataclass
class PreparedVideo:
    """A video resampled to the model's frame count, scales prebuilt."""

    video_id: str
    scales: ScaleSet
    density: np.ndarray
    count: int

    @classmethod
    def from_record(cls, record: VideoRecord, frames: int) -> "PreparedVideo":
        fitted = sample_or_pad(record.features, frames)
        ann = record.annotation.resampled(record.features.frames, frames)
        return cls(
            video_id=record.video_id,
            scales=build_scales(fitted),
            density=annotations_to_density(ann, frames),
            count=ann.count,
        )


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_mae: float
    train_obo: float
    val_mae: float
    val_obo: float


@dataclass
class TrainResult:
    history: list[EpochStats] = field(default_factory=list)
    first_batch_loss: float | None = None
    best_val_mae: float = float("nan")


def prepare(records: list[VideoRecord], frames: int) -> list[PreparedVideo]:
    return [PreparedVideo.from_record(r, frames) for r in records]


def evaluate(model: ModelParams, items: list[PreparedVideo]) -> tuple[list[CountPair], list[dict]]:
    """Inference over prepared videos; returns count pairs and per-video rows."""
    policy = RmdPolicy(p=model.config.drop_prob, training=False)
    pairs, rows = [], []
    for item in items:
        pred = forward_full(item.scales, model, policy)
        c_hat = count_from_density(pred.data)
        pairs.append(CountPair(item.count, c_hat))
        rows.append(
            {
                "video_id": item.video_id,
                "count_true": item.count,
                "count_pred": c_hat,
                "density_pred": pred.data.copy(),
                "density_true": item.density,
            }
        )
    return pairs, rows


def _metrics_or_nan(pairs: list[CountPair]) -> tuple[float, float]:
    if not pairs:
        return float("nan"), float("nan")
    return mae(pairs), obo(pairs)


def snapshot_params(model: ModelParams) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.parameters()}


def restore_params(model: ModelParams, snapshot: dict[str, np.ndarray]) -> None:
    for name, t in model.parameters():
        t.data = snapshot[name].copy()


def seeded_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """(init, shuffle, rmd) generators, all derived from the run seed."""
    init_ss, shuffle_ss, rmd_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(init_ss),
        np.random.default_rng(shuffle_ss),
        np.random.default_rng(rmd_ss),
    )


def build_model(config: ModelConfig, seed: int) -> ModelParams:
    init_rng, _, _ = seeded_streams(seed)
    return init_model(config, rng=init_rng)


def train_model(
    model: ModelParams,
    train_items: list[PreparedVideo],
    val_items: list[PreparedVideo],
    *,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    log=None,
) -> TrainResult:
    """Train in place; on return the model holds the best-validation weights."""
    _, shuffle_rng, rmd_rng = seeded_streams(seed)
    policy = RmdPolicy(p=model.config.drop_prob, training=True, rng=rmd_rng)
    params = model.tensors()
    state = AdamState.for_params(params, learning_rate=learning_rate)

    result = TrainResult()
    best_key = float("inf")
    best = snapshot_params(model)

    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(train_items))
        batch_losses = []
        for start in range(0, len(order), batch_size):
            batch = [train_items[i] for i in order[start : start + batch_size]]
            preds = [forward_full(item.scales, model, policy) for item in batch]
            truth = np.stack([item.density for item in batch])
            loss = mse_loss(preds, truth)
            if result.first_batch_loss is None:
                result.first_batch_loss = loss.item()
            grads = backward(loss, params)
            adam_step(params, grads, state)
            batch_losses.append(loss.item())

        train_pairs, _ = evaluate(model, train_items)
        val_pairs, _ = evaluate(model, val_items)
        train_mae, train_obo = _metrics_or_nan(train_pairs)
        val_mae, val_obo = _metrics_or_nan(val_pairs)
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(batch_losses)) if batch_losses else float("nan"),
            train_mae=train_mae,
            train_obo=train_obo,
            val_mae=val_mae,
            val_obo=val_obo,
        )
        result.history.append(stats)
        if log is not None:
            log(
                f"epoch {epoch:3d}  loss {stats.train_loss:.6f}  "
                f"train mae {train_mae:.4f} obo {train_obo:.4f}  "
                f"val mae {val_mae:.4f} obo {val_obo:.4f}"
            )
        # model selection by validation MAE; fall back to train MAE without a val set
        key = val_mae if val_pairs else train_mae
        if np.isfinite(key) and key < best_key:
            best_key = key
            best = snapshot_params(model)

    restore_params(model, best)
    result.best_val_mae = best_key if best_key != float("inf") else float("nan")
    return result
