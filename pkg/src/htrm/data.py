"""Dataset directories: feature files plus manifest and annotation CSVs.

A dataset directory holds:
    manifest.csv       video_id,path,frames   (path relative to the directory)
    annotations.csv    video_id,start_frame,end_frame  (one row per cycle)
    features/*.htrm    one tensor file per video
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, UsageError
from .features import FeatureSequence, SyntheticSpec, generate_synthetic, load_features, save_features
from .metrics import CycleAnnotation

MANIFEST_NAME = "manifest.csv"
ANNOTATIONS_NAME = "annotations.csv"
FEATURES_DIR = "features"


@dataclass
class VideoRecord:
    video_id: str
    features: FeatureSequence
    annotation: CycleAnnotation

    @property
    def count(self) -> int:
        return self.annotation.count


def write_annotations(path, rows: list[tuple[str, int, int]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "start_frame", "end_frame"])
        for video_id, start, end in rows:
            writer.writerow([video_id, start, end])


def read_annotations(path) -> dict[str, CycleAnnotation]:
    grouped: dict[str, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["video_id", "start_frame", "end_frame"]:
            raise DataFormatError(f"{path}: unexpected annotation header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataFormatError(f"{path}:{line_no}: expected 3 columns, got {len(row)}")
            try:
                start, end = int(row[1]), int(row[2])
            except ValueError as err:
                raise DataFormatError(f"{path}:{line_no}: non-integer frame bound") from err
            grouped.setdefault(row[0], []).append((start, end))
    return {vid: CycleAnnotation(sorted(cycles)) for vid, cycles in grouped.items()}


def write_manifest(path, rows: list[tuple[str, str, int]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "path", "frames"])
        for video_id, rel_path, frames in rows:
            writer.writerow([video_id, rel_path, frames])


def read_manifest(path) -> list[tuple[str, str, int]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["video_id", "path", "frames"]:
            raise DataFormatError(f"{path}: unexpected manifest header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataFormatError(f"{path}:{line_no}: expected 3 columns, got {len(row)}")
            try:
                frames = int(row[2])
            except ValueError as err:
                raise DataFormatError(f"{path}:{line_no}: non-integer frame count") from err
            rows.append((row[0], row[1], frames))
    return rows


def load_dataset(directory) -> list[VideoRecord]:
    """Read every video in manifest order."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataFormatError(f"no {MANIFEST_NAME} in {directory}")
    annotations = {}
    ann_path = directory / ANNOTATIONS_NAME
    if ann_path.exists():
        annotations = read_annotations(ann_path)
    records = []
    for video_id, rel_path, frames in read_manifest(manifest_path):
        seq = load_features(directory / rel_path)
        if seq.frames != frames:
            raise DataFormatError(
                f"{video_id}: manifest says {frames} frames, file holds {seq.frames}"
            )
        ann = annotations.get(video_id, CycleAnnotation([]))
        ann.validate_for(frames)
        records.append(VideoRecord(video_id, seq, ann))
    return records


def synthesize_dataset(
    directory,
    num_videos: int,
    frames: int,
    d: int,
    count_range: tuple[int, int],
    cycle_length_range: tuple[int, int],
    interruption_prob: float,
    noise_sigma: float,
    seed: int,
) -> list[VideoRecord]:
    """Write a deterministic synthetic dataset and return its records."""
    lo, hi = count_range
    if lo < 0 or lo > hi:
        raise UsageError(f"bad count range ({lo}, {hi})")
    directory = Path(directory)
    (directory / FEATURES_DIR).mkdir(parents=True, exist_ok=True)

    seed_seq = np.random.SeedSequence(seed)
    count_rng = np.random.default_rng(seed_seq.spawn(1)[0])
    video_seeds = [int(s.generate_state(1)[0]) for s in seed_seq.spawn(num_videos + 1)[1:]]

    manifest_rows, annotation_rows, records = [], [], []
    for i in range(num_videos):
        video_id = f"vid_{i:05d}"
        spec = SyntheticSpec(
            num_cycles=int(count_rng.integers(lo, hi + 1)),
            cycle_length_range=cycle_length_range,
            interruption_prob=interruption_prob,
            noise_sigma=noise_sigma,
            d=d,
            frames=frames,
            seed=video_seeds[i],
        )
        seq, ann = generate_synthetic(spec)
        rel_path = f"{FEATURES_DIR}/{video_id}.htrm"
        save_features(directory / rel_path, seq)
        manifest_rows.append((video_id, rel_path, frames))
        for s, e in ann.cycles:
            annotation_rows.append((video_id, s, e))
        # reload so in-memory values match the 32-bit file precision
        records.append(VideoRecord(video_id, load_features(directory / rel_path), ann))
    write_manifest(directory / MANIFEST_NAME, manifest_rows)
    write_annotations(directory / ANNOTATIONS_NAME, annotation_rows)
    return records


def _split_bucket(video_id: str) -> int:
    digest = hashlib.sha256(video_id.encode("utf-8")).digest()
    return digest[0] % 10


def split_records(
    records: list[VideoRecord], split_file=None
) -> tuple[list[VideoRecord], list[VideoRecord], list[VideoRecord]]:
    """80/10/10 split by a stable hash of the video id, or by an explicit
    split file with rows `video_id,split` (split in train/val/test)."""
    if split_file is not None:
        assigned: dict[str, str] = {}
        with open(split_file, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["video_id", "split"]:
                raise DataFormatError(f"{split_file}: unexpected split header {header}")
            for line_no, row in enumerate(reader, start=2):
                if len(row) != 2 or row[1] not in ("train", "val", "test"):
                    raise DataFormatError(f"{split_file}:{line_no}: bad split row {row}")
                assigned[row[0]] = row[1]
        buckets = {"train": [], "val": [], "test": []}
        for rec in records:
            split = assigned.get(rec.video_id)
            if split is None:
                raise DataFormatError(f"{split_file}: no split for {rec.video_id}")
            buckets[split].append(rec)
        return buckets["train"], buckets["val"], buckets["test"]

    train, val, test = [], [], []
    for rec in records:
        bucket = _split_bucket(rec.video_id)
        if bucket < 8:
            train.append(rec)
        elif bucket == 8:
            val.append(rec)
        else:
            test.append(rec)
    return train, val, test
