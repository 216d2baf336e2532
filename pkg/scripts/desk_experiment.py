#!/usr/bin/env python3
"""Desk-scale end-to-end experiment: synthesize, train, evaluate, report.

Defaults mirror the acceptance run: 9 modes x SNR {+10..+30 step 2} x 200
frames per cell, default architecture (kernel 9, 4 blocks, reduction 1,
repetition 2), up to 30 epochs at batch 128 / lr 0.001 with early stop once
validation clears 95%.
"""

import argparse
import sys
import time
from pathlib import Path

from modclass.datasets import SplitSpec, load_shards, split
from modclass.model import ModelConfig, init_model, save_model
from modclass.signals import MODE_ORDER, synth_dataset
from modclass.training import TrainConfig, evaluate, report_csv, train


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/desk", help="output directory")
    parser.add_argument("--snr-min", type=int, default=10)
    parser.add_argument("--snr-max", type=int, default=30)
    parser.add_argument("--frames-per-cell", type=int, default=200)
    parser.add_argument("--kernel-size", type=int, default=9)
    parser.add_argument("--no-se", action="store_true")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--target-val-accuracy", type=float, default=0.95)
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    out = Path(args.out)
    data_dir = out / "data"
    t0 = time.time()
    if not (data_dir / "manifest.json").exists():
        print(f"synthesizing dataset under {data_dir} ...")
        synth_dataset(
            [m.value for m in MODE_ORDER],
            list(range(args.snr_min, args.snr_max + 1, 2)),
            args.frames_per_cell,
            seed=args.seed,
            out_dir=data_dir,
        )
    data = load_shards(data_dir)
    train_idx, val_idx, test_idx = split(data, SplitSpec(seed=0))
    print(f"{len(data)} frames -> {len(train_idx)}/{len(val_idx)}/{len(test_idx)} split")

    cfg = ModelConfig(kernel_size=args.kernel_size, num_classes=len(data.label_names),
                      use_se=not args.no_se)
    model = init_model(cfg, seed=args.seed)
    print(f"model: {model.param_count():,} parameters")
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                       seed=args.seed, target_val_accuracy=args.target_val_accuracy,
                       early_stop_patience=5)
    model, curve = train(model, data, train_idx, val_idx, tcfg, log=print)
    save_model(model, out / "model.ckpt")

    report = evaluate(model, data, test_idx)
    report_csv(report, curve, out)
    print(f"test accuracy {report.overall_accuracy:.4f}; per-SNR:")
    for snr in sorted(report.per_snr_accuracy):
        print(f"  {snr:+3d} dB: {report.per_snr_accuracy[snr]:.4f}")
    print(f"done in {time.time() - t0:.0f}s; artifacts under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
