"""Command-line surface: synth, train, eval, infer, viz.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report
from .config import RunConfig, load_config
from .data import load_dataset, split_records, synthesize_dataset
from .errors import HtrmError, UsageError
from .features import load_features
from .metrics import CountPair, count_from_density, mae, obo
from .model import ModelParams, forward_full, load_checkpoint, predict_from_features, save_checkpoint
from .train import PreparedVideo, build_model, evaluate, prepare, train_model
from .tssm import RmdPolicy


def _check_compatible(model: ModelParams, config: RunConfig) -> None:
    cfg = model.config
    mismatches = []
    if cfg.frames != config.t:
        mismatches.append(f"t: checkpoint {cfg.frames}, config {config.t}")
    if cfg.d != config.d:
        mismatches.append(f"d: checkpoint {cfg.d}, config {config.d}")
    if cfg.heads != config.heads:
        mismatches.append(f"heads: checkpoint {cfg.heads}, config {config.heads}")
    if cfg.half_window != config.delta_k:
        mismatches.append(f"delta_k: checkpoint {cfg.half_window}, config {config.delta_k}")
    if mismatches:
        raise UsageError("checkpoint incompatible with config: " + "; ".join(mismatches))


def cmd_synth(config: RunConfig, out_dir=None) -> Path:
    target = Path(out_dir or config.data_dir or config.out_dir)
    records = synthesize_dataset(
        target,
        num_videos=config.num_videos,
        frames=config.synth_frames,
        d=config.d,
        count_range=(config.count_min, config.count_max),
        cycle_length_range=(config.cycle_min, config.cycle_max),
        interruption_prob=config.interruption_prob,
        noise_sigma=config.noise_sigma,
        seed=config.seed,
    )
    print(f"wrote {len(records)} videos to {target}")
    return target


def cmd_train(config: RunConfig) -> dict:
    if not config.data_dir:
        raise UsageError("train needs data_dir in the config")
    records = load_dataset(config.data_dir)
    train_recs, val_recs, _ = split_records(records, config.split_file or None)
    if not train_recs:
        raise UsageError(f"dataset {config.data_dir} has no training videos after the split")
    train_items = prepare(train_recs, config.t)
    val_items = prepare(val_recs, config.t)

    model = build_model(config.model_config(), config.seed)
    result = train_model(
        model,
        train_items,
        val_items,
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        seed=config.seed,
        log=print,
    )

    out = report.ensure_dir(config.out_dir)
    ckpt_path = Path(config.checkpoint)
    if ckpt_path.parent != Path("."):
        ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt_path, model)

    # final metrics come from the checkpoint as written, so a later eval
    # run on the same split reproduces them exactly
    reloaded = load_checkpoint(ckpt_path)
    final: dict[str, float] = {}
    train_pairs, _ = evaluate(reloaded, train_items)
    final["final_train_mae"] = mae(train_pairs)
    final["final_train_obo"] = obo(train_pairs)
    if val_items:
        val_pairs, _ = evaluate(reloaded, val_items)
        final["final_val_mae"] = mae(val_pairs)
        final["final_val_obo"] = obo(val_pairs)
    if result.first_batch_loss is not None:
        final["first_batch_loss"] = result.first_batch_loss

    report.write_training_log(out / "training_log.csv", result.history)
    report.write_metrics_csv(out / "final_metrics.csv", final)
    if result.history:
        report.save_loss_curve(out / "training_curves.png", result.history)
    print(report.format_metrics_table(final))
    print(f"checkpoint written to {ckpt_path}")
    return final


def _eval_items(config: RunConfig, dataset_dir=None) -> list[PreparedVideo]:
    directory = dataset_dir or config.eval_dir or config.data_dir
    if not directory:
        raise UsageError("eval needs eval_dir or data_dir in the config")
    return prepare(load_dataset(directory), config.t)


def cmd_eval(config: RunConfig, checkpoint=None, dataset_dir=None, use_ground_truth: bool = False) -> dict:
    items = _eval_items(config, dataset_dir)
    if use_ground_truth:
        # self-consistency mode: score the ground-truth densities as predictions
        pairs = [CountPair(it.count, count_from_density(it.density)) for it in items]
        rows = [
            {
                "video_id": it.video_id,
                "count_true": it.count,
                "count_pred": count_from_density(it.density),
            }
            for it in items
        ]
    else:
        model = load_checkpoint(checkpoint or config.checkpoint)
        _check_compatible(model, config)
        pairs, rows = evaluate(model, items)

    metrics = {"mae": mae(pairs), "obo": obo(pairs), "videos": float(len(pairs))}
    out = report.ensure_dir(config.out_dir)
    report.write_per_video_csv(out / "per_video.csv", rows)
    report.write_metrics_csv(out / "metrics.csv", metrics)
    report.save_count_scatter(out / "counts.png", rows)
    print(report.format_metrics_table(metrics))
    return metrics


def cmd_infer(config: RunConfig, checkpoint=None, features_path=None) -> float:
    if not features_path:
        raise UsageError("infer needs --features pointing at a tensor file")
    model = load_checkpoint(checkpoint or config.checkpoint)
    _check_compatible(model, config)
    seq = load_features(features_path)
    pred = predict_from_features(seq, model)
    count = count_from_density(pred.data)
    out = report.ensure_dir(config.out_dir)
    density = pred.data
    report.write_series_csv(out / "density.csv", "density", density)
    report.save_density_figure(out / "density.png", np.zeros_like(density), density, title=Path(features_path).name)
    print(f"predicted count: {count:.4f}")
    return count


def cmd_viz(config: RunConfig, checkpoint=None, video_id=None, dataset_dir=None) -> Path:
    model = load_checkpoint(checkpoint or config.checkpoint)
    _check_compatible(model, config)
    items = _eval_items(config, dataset_dir)
    if video_id is None:
        item = items[0]
    else:
        matches = [it for it in items if it.video_id == video_id]
        if not matches:
            raise UsageError(f"video {video_id!r} is not in the dataset")
        item = matches[0]

    capture: dict = {}
    policy = RmdPolicy(p=model.config.drop_prob, training=False)
    pred = forward_full(item.scales, model, policy, capture=capture)
    out = report.ensure_dir(config.out_dir)

    for scale_idx, stack in enumerate(capture["stacks"], start=1):
        for channel in range(stack.shape[2]):
            report.write_pgm(out / f"tssm_s{scale_idx}_ch{channel}.pgm", stack[:, :, channel])
        averaged = stack.mean(axis=2)
        report.write_pgm(out / f"tssm_s{scale_idx}_avg.pgm", averaged)
        report.save_heatmap_figure(
            out / f"tssm_s{scale_idx}_avg.png", averaged, title=f"{item.video_id} scale {scale_idx}"
        )

    decoded = capture["decoded"]
    norms = np.linalg.norm(decoded, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    cosine = (decoded / norms[:, None]) @ (decoded / norms[:, None]).T
    report.write_pgm(out / "feature_cosine.pgm", cosine)
    report.save_heatmap_figure(out / "feature_cosine.png", cosine, title=f"{item.video_id} decoded similarity")

    report.write_density_csv(out / "density.csv", item.density, pred.data)
    report.save_density_figure(out / "density.png", item.density, pred.data, title=item.video_id)
    print(f"visualization written to {out}")
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="htrm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic dataset"),
        ("train", "train a model on a dataset directory"),
        ("eval", "score a checkpoint against a dataset"),
        ("infer", "predict a count for one feature file"),
        ("viz", "emit similarity heatmaps and density plots"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to a key = value config file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--checkpoint", default=None, help="override the config checkpoint path")
        cmd.add_argument("--out", default=None, help="override the config output directory")
        if name == "eval":
            cmd.add_argument("--data", default=None, help="dataset directory to score")
            cmd.add_argument(
                "--ground-truth",
                action="store_true",
                help="score the dataset's own ground-truth densities (self-check)",
            )
        if name == "viz":
            cmd.add_argument("--data", default=None, help="dataset directory to read")
            cmd.add_argument("--video", default=None, help="video id to visualize")
        if name == "infer":
            cmd.add_argument("--features", default=None, help="feature tensor file")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.checkpoint is not None:
            config.checkpoint = args.checkpoint
        if args.out is not None:
            config.out_dir = args.out

        if args.command == "synth":
            cmd_synth(config, out_dir=args.out)
        elif args.command == "train":
            cmd_train(config)
        elif args.command == "eval":
            cmd_eval(
                config,
                checkpoint=args.checkpoint,
                dataset_dir=args.data,
                use_ground_truth=args.ground_truth,
            )
        elif args.command == "infer":
            cmd_infer(config, checkpoint=args.checkpoint, features_path=args.features)
        elif args.command == "viz":
            cmd_viz(config, checkpoint=args.checkpoint, video_id=args.video, dataset_dir=args.data)
        return 0
    except HtrmError as err:
        print(f"error: {err}", file=sys.stderr)
        return getattr(err, "exit_code", 2)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
