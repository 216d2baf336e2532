"""Binary shard format for labeled I/Q frames, stratified splits, mini-batches.

Shard layout (little-endian):

    magic         4 bytes  b"IQS1"
    version       u16      (currently 1)
    frame_count   u32
    frame_length  u32      (1024 for this toolkit)
    num_classes   u16
    label_names   num_classes x (u16 byte length + UTF-8 bytes)
    frames        frame_count records of
                      label   u8   (index into label_names)
                      snr_db  i8
                      i       frame_length float32
                      q       frame_length float32
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from modclass.signals import IqFrame

MAGIC = b"IQS1"
VERSION = 1


class ShardFormatError(ValueError):
    pass


def write_json_atomic(path: str | Path, obj) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def header_size(label_names: Sequence[str]) -> int:
    return 4 + 2 + 4 + 4 + 2 + sum(2 + len(n.encode("utf-8")) for n in label_names)


def write_shard(frames: Sequence[IqFrame], path: str | Path, label_names: Sequence[str] | None = None) -> int:
    """Write frames to one shard file; returns the record count."""
    if not frames:
        raise ValueError("no frames to write")
    length = len(frames[0].i_samples)
    if any(len(f.i_samples) != length or len(f.q_samples) != length for f in frames):
        raise ValueError("heterogeneous frame lengths")
    if label_names is None:
        label_names = sorted({f.label for f in frames})
    index = {name: i for i, name in enumerate(label_names)}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HIIH", VERSION, len(frames), length, len(label_names)))
        for name in label_names:
            data = name.encode("utf-8")
            fh.write(struct.pack("<H", len(data)))
            fh.write(data)
        for f in frames:
            if f.label not in index:
                raise ValueError(f"label {f.label!r} missing from label table")
            fh.write(struct.pack("<Bb", index[f.label], f.snr_db))
            fh.write(np.ascontiguousarray(f.i_samples, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(f.q_samples, dtype="<f4").tobytes())
    return len(frames)


@dataclass
class ShardData:
    """Frames loaded into memory: inputs [N, L, 2] with channel 0 = I."""

    inputs: np.ndarray
    labels: np.ndarray
    snrs: np.ndarray
    label_names: list[str]

    def __len__(self) -> int:
        return len(self.labels)


def read_shard(path: str | Path) -> ShardData:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ShardFormatError(f"bad shard magic {magic!r} in {path}")
        version, count, length, num_classes = struct.unpack("<HIIH", fh.read(12))
        if version != VERSION:
            raise ShardFormatError(f"unsupported shard version {version}")
        names = []
        for _ in range(num_classes):
            (nlen,) = struct.unpack("<H", fh.read(2))
            names.append(fh.read(nlen).decode("utf-8"))
        record = np.dtype(
            [("label", "u1"), ("snr", "i1"), ("i", "<f4", (length,)), ("q", "<f4", (length,))]
        )
        records = np.fromfile(fh, dtype=record, count=count)
        if len(records) != count:
            raise ShardFormatError(f"truncated shard: expected {count} frames, got {len(records)}")
    inputs = np.stack([records["i"], records["q"]], axis=-1)
    return ShardData(
        inputs=inputs,
        labels=records["label"].astype(np.int64),
        snrs=records["snr"].astype(np.int64),
        label_names=names,
    )


def load_shards(paths: Iterable[str | Path] | str | Path) -> ShardData:
    """Read one shard, a list of shards, or every *.iqs under a directory."""
    if isinstance(paths, (str, Path)):
        p = Path(paths)
        paths = sorted(p.glob("*.iqs")) if p.is_dir() else [p]
    parts = [read_shard(p) for p in paths]
    if not parts:
        raise ShardFormatError("no shard files found")
    names = parts[0].label_names
    if any(part.label_names != names for part in parts):
        raise ShardFormatError("shards disagree on label tables")
    return ShardData(
        inputs=np.concatenate([p.inputs for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        snrs=np.concatenate([p.snrs for p in parts]),
        label_names=names,
    )


# ---------------------------------------------------------------------------
# splits and batches


@dataclass
class SplitSpec:
    """Stratified train/val/test fractions; remainder after rounding -> train."""

    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0 for f in fracs):
            raise ValueError("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def split(data: ShardData, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic per-(label, snr) stratified split into index arrays."""
    train, val, test = [], [], []
    keys = sorted({(int(l), int(s)) for l, s in zip(data.labels, data.snrs)})
    for label, snr in keys:
        cell = np.flatnonzero((data.labels == label) & (data.snrs == snr))
        rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), label, snr + 1000]))
        perm = rng.permutation(cell)
        n = len(perm)
        if n < 3:
            warnings.warn(
                f"cell (label={label}, snr={snr}) has only {n} frames; all assigned to train"
            )
            train.append(perm)
            continue
        n_val = int(n * spec.val_fraction)
        n_test = int(n * spec.test_fraction)
        n_train = n - n_val - n_test
        train.append(perm[:n_train])
        val.append(perm[n_train : n_train + n_val])
        test.append(perm[n_train + n_val :])
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.array([], dtype=np.int64)
    return cat(train), cat(val), cat(test)


@dataclass
class Batch:
    inputs: np.ndarray  # [b, L, 2] float32
    labels: np.ndarray  # [b] int
    snr_tags: np.ndarray  # [b] int

    def __post_init__(self) -> None:
        if not (len(self.inputs) == len(self.labels) == len(self.snr_tags)):
            raise ValueError("batch field lengths disagree")


def batches(
    data: ShardData,
    indices: np.ndarray,
    batch_size: int,
    shuffle_seed: int = 0,
    epoch: int = 0,
    shuffle: bool = True,
) -> Iterator[Batch]:
    """Yield shuffled mini-batches; the final short batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValueError("empty index set")
    if shuffle:
        rng = np.random.default_rng(np.random.SeedSequence([int(shuffle_seed), int(epoch)]))
        indices = rng.permutation(indices)
    for start in range(0, len(indices), batch_size):
        sel = indices[start : start + batch_size]
        yield Batch(
            inputs=np.ascontiguousarray(data.inputs[sel], dtype=np.float32),
            labels=data.labels[sel],
            snr_tags=data.snrs[sel],
        )
