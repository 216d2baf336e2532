"""Training loop with Adam, per-SNR evaluation, and CSV/JSON reporting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from modclass.datasets import ShardData, batches, write_json_atomic
from modclass.engine.layers import EngineNumericsError
from modclass.engine.loss import softmax_cross_entropy
from modclass.engine.optim import adam_step
from modclass.model import SeMsfnModel, save_model


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 0.001
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 disables periodic checkpoints
    early_stop_patience: int | None = None
    target_val_accuracy: float | None = None  # stop once validation reaches this

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")


@dataclass
class TrainingCurve:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)


@dataclass
class EvalReport:
    per_snr_accuracy: dict[int, float]
    overall_accuracy: float
    confusion: np.ndarray  # rows = truth, cols = prediction
    per_class_accuracy: dict[str, float]
    label_names: list[str]
    n_examples: int
    confusion_snr: int | None = None


def _diagnose_nonfinite(model: SeMsfnModel, inputs: np.ndarray) -> None:
    """Re-run the offending batch with per-layer checks to name the culprit."""
    model.set_check_numerics(True)
    try:
        model.forward(inputs, train=True)
    finally:
        model.set_check_numerics(False)
    raise EngineNumericsError("non-finite loss (forward re-check stayed finite)")


def _pass_metrics(model: SeMsfnModel, data: ShardData, indices: np.ndarray,
                  batch_size: int) -> tuple[float, float]:
    """Mean loss and accuracy over an index set in infer mode."""
    total_loss = 0.0
    correct = 0
    for batch in batches(data, indices, batch_size, shuffle=False):
        logits = model.forward(batch.inputs, train=False)
        loss, _ = softmax_cross_entropy(logits, batch.labels)
        total_loss += loss * len(batch.labels)
        correct += int(np.sum(np.argmax(logits, axis=1) == batch.labels))
    n = len(indices)
    return total_loss / n, correct / n


def train(
    model: SeMsfnModel,
    data: ShardData,
    train_idx: np.ndarray,
    val_idx: np.ndarray,
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    log=None,
) -> tuple[SeMsfnModel, TrainingCurve]:
    """Epoch loop: shuffle, forward, cross-entropy, backward, Adam per batch.

    Validation runs in infer mode each epoch; the best-validation parameter
    snapshot is restored into the model before returning.
    """
    if np.intersect1d(train_idx, val_idx).size:
        raise ValueError("train and validation sets overlap")
    curve = TrainingCurve()
    best_state: dict[str, np.ndarray] | None = None
    best_acc = -1.0
    stale = 0
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        epoch_correct = 0
        for batch in batches(data, train_idx, cfg.batch_size, cfg.seed, epoch):
            model.zero_grads()
            logits = model.forward(batch.inputs, train=True)
            loss, grad = softmax_cross_entropy(logits, batch.labels)
            if not math.isfinite(loss):
                _diagnose_nonfinite(model, batch.inputs)
            model.backward(grad)
            for slot in model.slots.values():
                adam_step(slot, cfg.lr)
            epoch_loss += loss * len(batch.labels)
            epoch_correct += int(np.sum(np.argmax(logits, axis=1) == batch.labels))
        val_loss, val_acc = _pass_metrics(model, data, val_idx, cfg.batch_size)
        curve.train_loss.append(epoch_loss / len(train_idx))
        curve.train_accuracy.append(epoch_correct / len(train_idx))
        curve.val_loss.append(val_loss)
        curve.val_accuracy.append(val_acc)
        if log:
            log(
                f"epoch {epoch + 1:3d}/{cfg.epochs}: "
                f"train loss {curve.train_loss[-1]:.4f} acc {curve.train_accuracy[-1]:.4f} | "
                f"val loss {val_loss:.4f} acc {val_acc:.4f}"
            )
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
            stale = 0
        else:
            stale += 1
        if checkpoint_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_model(model, Path(checkpoint_dir) / f"epoch_{epoch + 1:03d}.ckpt")
        if cfg.target_val_accuracy is not None and val_acc >= cfg.target_val_accuracy:
            break
        if cfg.early_stop_patience is not None and stale >= cfg.early_stop_patience:
            break
    if best_state is not None:
        model.load_state(best_state)
    return model, curve


def evaluate(
    model: SeMsfnModel,
    data: ShardData,
    indices: np.ndarray,
    batch_size: int = 256,
    confusion_snr: int | None = None,
) -> EvalReport:
    """Infer-mode predictions binned by SNR tag and by class.

    ``confusion_snr`` restricts the confusion matrix to one SNR bin; the
    accuracy numbers always cover the whole index set.
    """
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValueError("empty test set")
    k = len(data.label_names)
    confusion = np.zeros((k, k), dtype=np.int64)
    truths, preds, snrs = [], [], []
    for batch in batches(data, indices, batch_size, shuffle=False):
        logits = model.forward(batch.inputs, train=False)
        pred = np.argmax(logits, axis=1)
        truths.append(batch.labels)
        preds.append(pred)
        snrs.append(batch.snr_tags)
    truth = np.concatenate(truths)
    pred = np.concatenate(preds)
    snr = np.concatenate(snrs)
    mask = np.ones(len(truth), dtype=bool) if confusion_snr is None else snr == confusion_snr
    np.add.at(confusion, (truth[mask], pred[mask]), 1)
    per_snr = {
        int(s): float(np.mean(pred[snr == s] == truth[snr == s])) for s in np.unique(snr)
    }
    per_class = {
        name: float(np.mean(pred[truth == c] == truth[truth == c]))
        for c, name in enumerate(data.label_names)
        if np.any(truth == c)
    }
    return EvalReport(
        per_snr_accuracy=per_snr,
        overall_accuracy=float(np.mean(pred == truth)),
        confusion=confusion,
        per_class_accuracy=per_class,
        label_names=list(data.label_names),
        n_examples=len(truth),
        confusion_snr=confusion_snr,
    )


# ---------------------------------------------------------------------------
# reporting

LOW_SNR_BAND = (0, 2, 4, 6, 8, 10)


def band_average(per_snr_accuracy: dict[int, float]) -> float | None:
    """Unweighted mean accuracy over the 0..10 dB bins that are present."""
    vals = [per_snr_accuracy[s] for s in LOW_SNR_BAND if s in per_snr_accuracy]
    return float(np.mean(vals)) if vals else None


def summary_dict(report: EvalReport) -> dict:
    return {
        "overall_accuracy": report.overall_accuracy,
        "accuracy_0_to_10db": band_average(report.per_snr_accuracy),
        "max_single_snr_accuracy": max(report.per_snr_accuracy.values()),
        "n_examples": report.n_examples,
        "per_snr_accuracy": {str(k): v for k, v in sorted(report.per_snr_accuracy.items())},
        "per_class_accuracy": report.per_class_accuracy,
    }


def write_curves_csv(curve: TrainingCurve, path: str | Path) -> Path:
    import csv

    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for i in range(len(curve)):
            writer.writerow([
                i + 1,
                repr(curve.train_loss[i]),
                repr(curve.train_accuracy[i]),
                repr(curve.val_loss[i]),
                repr(curve.val_accuracy[i]),
            ])
    return path


def report_csv(report: EvalReport, curve: TrainingCurve | None, prefix: str | Path) -> list[Path]:
    """Emit accuracy_by_snr.csv, confusion.csv, summary.json and, when a
    curve is given, curves.csv under the prefix directory."""
    import csv

    prefix = Path(prefix)
    prefix.mkdir(parents=True, exist_ok=True)
    written = []

    path = prefix / "accuracy_by_snr.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "accuracy"])
        for s in sorted(report.per_snr_accuracy):
            writer.writerow([s, repr(report.per_snr_accuracy[s])])
    written.append(path)

    path = prefix / "confusion.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth"] + report.label_names)
        for name, row in zip(report.label_names, report.confusion):
            writer.writerow([name] + [int(v) for v in row])
    written.append(path)

    if curve is not None:
        written.append(write_curves_csv(curve, prefix / "curves.csv"))

    path = prefix / "summary.json"
    write_json_atomic(path, summary_dict(report))
    written.append(path)
    return written


def rebuild_summary(prefix: str | Path) -> Path:
    """Re-render summary.json from the stored CSVs (idempotent for standard,
    unfiltered evaluation output)."""
    import csv

    prefix = Path(prefix)
    per_snr: dict[int, float] = {}
    with open(prefix / "accuracy_by_snr.csv", newline="", encoding="utf-8") as fh:
        for row in list(csv.reader(fh))[1:]:
            per_snr[int(row[0])] = float(row[1])
    with open(prefix / "confusion.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    confusion = np.array([[int(v) for v in row[1:]] for row in rows[1:]], dtype=np.int64)
    total = int(confusion.sum())
    report = EvalReport(
        per_snr_accuracy=per_snr,
        overall_accuracy=float(np.trace(confusion) / total),
        confusion=confusion,
        per_class_accuracy={
            name: float(confusion[i, i] / confusion[i].sum())
            for i, name in enumerate(names)
            if confusion[i].sum()
        },
        label_names=names,
        n_examples=total,
    )
    path = prefix / "summary.json"
    write_json_atomic(path, summary_dict(report))
    return path
