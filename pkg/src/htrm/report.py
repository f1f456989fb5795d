"""Report emitters: PGM heatmaps, delimited outputs, matplotlib figures.

Figures are rendered with the Agg backend straight to files; every report
path writes the delimited data first so the figures are always a companion,
never the only record.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

_PNG_META = {"Software": "htrm"}  # keeps PNG bytes reproducible across runs


def to_gray(image: np.ndarray) -> np.ndarray:
    """Min-max normalize to uint8; a constant image maps to mid-gray."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = image.min(), image.max()
    if hi > lo:
        scaled = (image - lo) / (hi - lo)
    else:
        scaled = np.full_like(image, 0.5)
    return np.round(scaled * 255.0).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5), one byte per pixel."""
    gray = to_gray(image)
    if gray.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {gray.shape}")
    height, width = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def write_metrics_csv(path, metrics: dict[str, float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for name, value in metrics.items():
            writer.writerow([name, repr(float(value))])


def read_metrics_csv(path) -> dict[str, float]:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            out[row[0]] = float(row[1])
    return out


def format_metrics_table(metrics: dict[str, float]) -> str:
    width = max(len(k) for k in metrics) if metrics else 0
    lines = [f"{name.ljust(width)}  {value:.6f}" for name, value in metrics.items()]
    return "\n".join(lines)


def write_per_video_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "count_true", "count_pred"])
        for row in rows:
            writer.writerow([row["video_id"], row["count_true"], repr(float(row["count_pred"]))])


def write_series_csv(path, name: str, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", name])
        for t, value in enumerate(values):
            writer.writerow([t, repr(float(value))])


def write_density_csv(path, truth: np.ndarray, pred: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["frame", "truth", "prediction"])
        for t, (gt, p) in enumerate(zip(truth, pred)):
            writer.writerow([t, repr(float(gt)), repr(float(p))])


def write_training_log(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "train_mae", "train_obo", "val_mae", "val_obo"])
        for row in history:
            writer.writerow(
                [
                    row.epoch,
                    repr(row.train_loss),
                    repr(row.train_mae),
                    repr(row.train_obo),
                    repr(row.val_mae),
                    repr(row.val_obo),
                ]
            )


def save_density_figure(path, truth: np.ndarray, pred: np.ndarray, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(7, 3))
    frames = np.arange(len(truth))
    ax.plot(frames, truth, label=f"truth (sum {truth.sum():.2f})", color="tab:blue")
    ax.plot(frames, pred, label=f"prediction (sum {pred.sum():.2f})", color="tab:red")
    ax.set_xlabel("frame")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def save_heatmap_figure(path, image: np.ndarray, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(image, cmap="viridis", interpolation="nearest")
    ax.set_xlabel("frame")
    ax.set_ylabel("frame")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def save_loss_curve(path, history) -> None:
    fig, ax = plt.subplots(figsize=(7, 3))
    epochs = [row.epoch for row in history]
    ax.plot(epochs, [row.train_loss for row in history], label="train loss", color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [row.train_mae for row in history], label="train mae", color="tab:orange")
    ax2.plot(epochs, [row.val_mae for row in history], label="val mae", color="tab:green")
    ax2.set_ylabel("mae")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def save_count_scatter(path, rows: list[dict]) -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    truths = [row["count_true"] for row in rows]
    preds = [row["count_pred"] for row in rows]
    ax.scatter(truths, preds, s=14, alpha=0.7)
    top = max(truths + preds + [1])
    ax.plot([0, top], [0, top], color="gray", linewidth=0.8)
    ax.set_xlabel("true count")
    ax.set_ylabel("predicted count")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def ensure_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out
