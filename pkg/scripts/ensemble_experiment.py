#!/usr/bin/env python3
"""Train the three-kernel ensemble recipe (9, 13, 15) on the desk dataset and
compare the vote against each member."""

import argparse
import sys
from pathlib import Path

from modclass.datasets import SplitSpec, load_shards, split
from modclass.ensemble import EnsembleSpec, ensemble_evaluate, load_members
from modclass.model import ModelConfig, init_model, save_model
from modclass.training import TrainConfig, train


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", default="runs/desk/data",
                        help="shard dataset (see desk_experiment.py)")
    parser.add_argument("--out", default="runs/ensemble")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    data = load_shards(args.data)
    train_idx, val_idx, test_idx = split(data, SplitSpec(seed=0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    members = []
    for offset, kernel in enumerate((9, 13, 15)):
        path = out / f"k{kernel}.ckpt"
        if not path.exists():
            print(f"training kernel-{kernel} member ...")
            model = init_model(ModelConfig(kernel_size=kernel,
                                           num_classes=len(data.label_names)),
                               seed=args.seed + offset)
            cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                              seed=args.seed + offset, target_val_accuracy=0.95,
                              early_stop_patience=5)
            model, _ = train(model, data, train_idx, val_idx, cfg, log=print)
            save_model(model, path)
        members.append(str(path))

    spec = EnsembleSpec(members=members)
    spec.save_json(out / "ensemble.json")
    report, member_accs = ensemble_evaluate(load_members(spec), data, test_idx)
    for path, acc in zip(members, member_accs):
        print(f"member {path}: {acc:.4f}")
    print(f"ensemble: {report.overall_accuracy:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
