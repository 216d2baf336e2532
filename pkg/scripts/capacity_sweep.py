#!/usr/bin/env python3
"""Parameter-count sweep over the hyperparameter grid and kernel sizes.

Builds each configuration (no training) and prints capacity plus forward
shape checks on a [4, 1024, 2] probe batch.
"""

import sys
import warnings

import numpy as np

from modclass.model import ModelConfig, init_model

ROWS = [
    (4, 1, 3), (3, 1, 3), (2, 1, 3), (1, 1, 3),
    (4, 1, 2), (3, 1, 2), (2, 1, 2), (1, 1, 2),
    (4, 1, 1), (3, 1, 1), (2, 1, 1), (1, 1, 1),
    (4, 4, 2), (4, 8, 2), (4, 12, 2), (4, 16, 2),
]


def main() -> int:
    x = np.random.default_rng(0).standard_normal((4, 1024, 2)).astype(np.float32)
    print("no  block  reduction  repetition  params")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, (block, reduction, repetition) in enumerate(ROWS, start=1):
            cfg = ModelConfig(kernel_size=8, block=block, reduction_ratio=reduction,
                              repetition=repetition, num_classes=24)
            model = init_model(cfg, seed=0)
            logits = model.forward(x)
            assert logits.shape == (4, 24)
            print(f"{i:2d}  {block:5d}  {reduction:9d}  {repetition:10d}  {model.param_count():>9,}")
        print("\nkernel  params")
        for k in (3, 5, 7, 8, 9, 11, 13, 15):
            model = init_model(ModelConfig(kernel_size=k, num_classes=24), seed=0)
            model.forward(x)
            print(f"{k:6d}  {model.param_count():>9,}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
