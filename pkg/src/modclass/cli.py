"""Command-line entry point: synth, train, eval, ensemble, report.

Exit codes: 0 success, 1 configuration/input error, 2 numeric abort during
training. Every command writes a run_manifest.json next to its outputs
recording the resolved configuration, the root seed, and wall-clock timings.
With ``--threads 1`` all artifacts except that manifest (which carries
timings) are byte-reproducible for a fixed seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

import modclass
from modclass import datasets, signals
from modclass.engine.layers import EngineNumericsError
from modclass.ensemble import EnsembleSpec, ensemble_evaluate, load_members
from modclass.model import ModelConfig, init_model, load_model, save_model
from modclass.training import (
    TrainConfig,
    evaluate,
    rebuild_summary,
    report_csv,
    train,
    write_curves_csv,
)

GRID_ROWS = [
    (4, 1, 3), (3, 1, 3), (2, 1, 3), (1, 1, 3),
    (4, 1, 2), (3, 1, 2), (2, 1, 2), (1, 1, 2),
    (4, 1, 1), (3, 1, 1), (2, 1, 1), (1, 1, 1),
    (4, 4, 2), (4, 8, 2), (4, 12, 2), (4, 16, 2),
]


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _default_seed(value) -> int:
    if value is not None:
        return int(value)
    return int(os.environ.get("MODCLASS_SEED", "0"))


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        print("warning: threadpoolctl unavailable; --threads ignored", file=sys.stderr)
        return
    global _THREAD_LIMIT
    _THREAD_LIMIT = threadpool_limits(limits=n)


def _write_manifest(out_dir: Path, command: str, config: dict, seed: int, started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "root_seed": seed,
        "toolkit_version": modclass.__version__,
        "started_utc": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "elapsed_seconds": round(time.time() - started, 3),
    }
    datasets.write_json_atomic(out_dir / "run_manifest.json", manifest)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    started = time.time()
    seed = _default_seed(args.seed)
    if args.snr_step < 1 or args.snr_max < args.snr_min:
        raise ValueError("invalid SNR grid")
    snr_grid = list(range(args.snr_min, args.snr_max + 1, args.snr_step))
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    imp = signals.ImpairmentConfig(
        amplitude_fade=args.amplitude_fade,
        carrier_offset=args.carrier_offset,
        phase_jitter_std=args.phase_jitter_std,
        timing_error=args.timing_error,
        samples_per_symbol=args.samples_per_symbol,
        pulse_shape=args.pulse_shape,
        rrc_rolloff=args.rolloff,
    )
    out = Path(args.out)
    manifest = signals.synth_dataset(
        modes, snr_grid, args.frames_per_cell, imp, seed, out, shard_size=args.shard_size
    )
    print(f"wrote {manifest['frame_count']} frames over {len(manifest['cells'])} cells to {out}")
    _write_manifest(out, "synth", {
        "modes": modes, "snr_grid": snr_grid, "frames_per_cell": args.frames_per_cell,
        "shard_size": args.shard_size, "impairments": manifest["impairments"],
    }, seed, started)
    return 0


def _model_config_from_args(args, num_classes: int) -> ModelConfig:
    return ModelConfig(
        kernel_size=args.kernel_size,
        block=args.blocks,
        reduction_ratio=args.reduction,
        repetition=args.repetition,
        num_classes=num_classes,
        base_filters=args.base_filters,
        use_se=not args.no_se,
    )


def cmd_train(args) -> int:
    started = time.time()
    seed = _default_seed(args.seed)
    data = datasets.load_shards(args.data)
    spec = datasets.SplitSpec(seed=args.split_seed)
    train_idx, val_idx, test_idx = datasets.split(data, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=seed,
        checkpoint_every=args.checkpoint_every,
        early_stop_patience=args.patience,
        target_val_accuracy=args.target_val_accuracy,
    )
    if args.grid:
        import csv

        rows_out = []
        for i, (block, reduction, repetition) in enumerate(GRID_ROWS):
            import warnings as _warnings

            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore")
                mcfg = ModelConfig(
                    kernel_size=args.kernel_size, block=block, reduction_ratio=reduction,
                    repetition=repetition, num_classes=len(data.label_names),
                    base_filters=args.base_filters, use_se=not args.no_se,
                )
            model = init_model(mcfg, seed=seed)
            model, _ = train(model, data, train_idx, val_idx, tcfg, log=None)
            report = evaluate(model, data, test_idx, batch_size=args.batch_size)
            rows_out.append([
                i + 1, block, reduction, repetition,
                repr(report.overall_accuracy),
                repr(max(report.per_snr_accuracy.values())),
                model.param_count(),
            ])
            print(f"grid row {i + 1}/16 (block={block}, r={reduction}, rep={repetition}): "
                  f"accuracy {report.overall_accuracy:.4f}, params {model.param_count()}")
        with open(out / "grid.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["no", "block", "reduction_ratio", "repetition",
                             "average_accuracy", "max_accuracy", "param_count"])
            writer.writerows(rows_out)
        _write_manifest(out, "train-grid", {
            "data": str(args.data), "kernel_size": args.kernel_size,
            "epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr,
            "split_seed": args.split_seed,
        }, seed, started)
        return 0
    mcfg = _model_config_from_args(args, num_classes=len(data.label_names))
    model = init_model(mcfg, seed=seed)
    print(f"training {model.param_count():,}-parameter model on {len(train_idx)} frames "
          f"({len(val_idx)} validation)")
    model, curve = train(model, data, train_idx, val_idx, tcfg,
                         checkpoint_dir=out if args.checkpoint_every else None, log=print)
    save_model(model, out / "model.ckpt")
    write_curves_csv(curve, out / "curves.csv")
    _write_manifest(out, "train", {
        "data": str(args.data), "model": mcfg.to_dict(),
        "epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr,
        "split_seed": args.split_seed, "patience": args.patience,
        "target_val_accuracy": args.target_val_accuracy,
    }, seed, started)
    print(f"best validation accuracy {max(curve.val_accuracy):.4f}; wrote {out / 'model.ckpt'}")
    return 0


def _select_indices(data, split_name: str, split_seed: int) -> np.ndarray:
    if split_name == "all":
        return np.arange(len(data))
    train_idx, val_idx, test_idx = datasets.split(data, datasets.SplitSpec(seed=split_seed))
    return {"train": train_idx, "val": val_idx, "test": test_idx}[split_name]


def cmd_eval(args) -> int:
    started = time.time()
    seed = _default_seed(args.seed)
    data = datasets.load_shards(args.data)
    model = load_model(args.checkpoint)
    if model.config.num_classes != len(data.label_names):
        raise ValueError(
            f"checkpoint expects {model.config.num_classes} classes but the dataset "
            f"has {len(data.label_names)}"
        )
    indices = _select_indices(data, args.split, args.split_seed)
    report = evaluate(model, data, indices, batch_size=args.batch_size,
                      confusion_snr=args.confusion_snr)
    out = Path(args.out)
    report_csv(report, None, out)
    _write_manifest(out, "eval", {
        "checkpoint": str(args.checkpoint), "data": str(args.data),
        "split": args.split, "split_seed": args.split_seed,
        "confusion_snr": args.confusion_snr,
    }, seed, started)
    print(f"overall accuracy {report.overall_accuracy:.4f} over {report.n_examples} frames")
    return 0


def cmd_ensemble(args) -> int:
    started = time.time()
    seed = _default_seed(args.seed)
    spec = EnsembleSpec.from_json(args.spec)
    models = load_members(spec)
    data = datasets.load_shards(args.data)
    if models[0].config.num_classes != len(data.label_names):
        raise ValueError("ensemble class count does not match the dataset")
    indices = _select_indices(data, args.split, args.split_seed)
    report, member_accs = ensemble_evaluate(models, data, indices, spec.tie_break,
                                            batch_size=args.batch_size)
    out = Path(args.out)
    report_csv(report, None, out)
    import csv

    with open(out / "per_member.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["member", "accuracy"])
        for path, acc in zip(spec.members, member_accs):
            writer.writerow([path, repr(acc)])
    _write_manifest(out, "ensemble", {
        "spec": str(args.spec), "members": spec.members, "tie_break": spec.tie_break,
        "data": str(args.data), "split": args.split, "split_seed": args.split_seed,
    }, seed, started)
    print(f"ensemble accuracy {report.overall_accuracy:.4f} "
          f"(members: {', '.join(f'{a:.4f}' for a in member_accs)})")
    return 0


def cmd_report(args) -> int:
    path = rebuild_summary(args.dir)
    print(f"rebuilt {path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> CliParser:
    parser = CliParser(prog="modclass", description=__doc__)
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS threads; 1 guarantees bit-reproducible runs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("synth",
                       help="synthesize a labeled I/Q shard dataset")
    p.add_argument("--modes", default=",".join(m.value for m in signals.MODE_ORDER),
                   help="comma-separated modulation tags")
    p.add_argument("--snr-min", type=int, default=-20)
    p.add_argument("--snr-max", type=int, default=30)
    p.add_argument("--snr-step", type=int, default=2)
    p.add_argument("--frames-per-cell", type=int, default=100)
    p.add_argument("--seed", type=int, default=None,
                   help="root seed (falls back to MODCLASS_SEED, then 0)")
    p.add_argument("--out", required=True)
    p.add_argument("--shard-size", type=int, default=None, help="frames per shard file")
    p.add_argument("--samples-per-symbol", type=int, default=8)
    p.add_argument("--pulse-shape", choices=["rrc", "rect", "none"], default="rrc")
    p.add_argument("--rolloff", type=float, default=0.35)
    p.add_argument("--amplitude-fade", type=float, default=1.0)
    p.add_argument("--carrier-offset", type=float, default=0.0)
    p.add_argument("--phase-jitter-std", type=float, default=0.0)
    p.add_argument("--timing-error", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a classifier on shards")
    p.add_argument("--data", required=True, help="shard file or directory")
    p.add_argument("--kernel-size", type=int, default=9)
    p.add_argument("--blocks", type=int, default=4, help="bottleneck blocks per residual layer")
    p.add_argument("--reduction", type=int, default=1, help="SE reduction ratio")
    p.add_argument("--repetition", type=int, default=2, help="number of residual layers")
    p.add_argument("--base-filters", type=int, default=32)
    p.add_argument("--no-se", action="store_true", help="ablate the SE gating blocks")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--patience", type=int, default=None, help="early-stop patience in epochs")
    p.add_argument("--target-val-accuracy", type=float, default=None,
                   help="stop once validation accuracy reaches this value")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--grid", action="store_true",
                   help="train every hyperparameter grid row and emit grid.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on shards")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["all", "train", "val", "test"], default="test")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--confusion-snr", type=int, default=None,
                   help="restrict the confusion matrix to one SNR bin")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble",
                       help="evaluate a voting ensemble described by a spec JSON")
    p.add_argument("--spec", required=True, help="JSON: {members: [...], tie_break: ...}")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["all", "train", "val", "test"], default="test")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("report",
                       help="re-render summary.json from stored CSVs")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    try:
        return args.func(args)
    except EngineNumericsError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
