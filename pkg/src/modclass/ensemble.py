"""Plurality-vote ensembles over independently trained model variants."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from modclass.datasets import ShardData, batches
from modclass.engine.loss import softmax
from modclass.model import SeMsfnModel, load_model
from modclass.training import EvalReport, evaluate

TIE_BREAKS = ("mean_probability", "lowest_index")


@dataclass
class EnsembleSpec:
    members: list[str] = field(default_factory=list)
    tie_break: str = "mean_probability"

    def __post_init__(self) -> None:
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least 2 members")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"tie_break must be one of {TIE_BREAKS}")

    @classmethod
    def from_json(cls, path: str | Path) -> "EnsembleSpec":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(members=list(doc["members"]), tie_break=doc.get("tie_break", "mean_probability"))

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"members": self.members, "tie_break": self.tie_break}, indent=2) + "\n",
            encoding="utf-8",
        )


def load_members(spec: EnsembleSpec) -> list[SeMsfnModel]:
    models = [load_model(p) for p in spec.members]
    classes = {m.config.num_classes for m in models}
    if len(classes) != 1:
        raise ValueError(f"members disagree on class count: {sorted(classes)}")
    return models


def _vote(probs: np.ndarray, tie_break: str) -> np.ndarray:
    """probs: [members, batch, classes] -> winning class per example."""
    n_members, b, k = probs.shape
    votes = np.zeros((b, k), dtype=np.int64)
    member_preds = np.argmax(probs, axis=2)
    for m in range(n_members):
        votes[np.arange(b), member_preds[m]] += 1
    top = votes.max(axis=1)
    winners = votes == top[:, None]
    out = np.empty(b, dtype=np.int64)
    single = winners.sum(axis=1) == 1
    out[single] = np.argmax(winners[single], axis=1)
    tie_rows = np.flatnonzero(~single)
    if tie_rows.size:
        if tie_break == "mean_probability":
            out[tie_rows] = np.argmax(probs.mean(axis=0)[tie_rows], axis=1)
        else:  # lowest_index among the tied classes
            out[tie_rows] = np.argmax(winners[tie_rows], axis=1)
    return out


def ensemble_predict(
    models: list[SeMsfnModel],
    inputs: np.ndarray,
    tie_break: str = "mean_probability",
) -> np.ndarray:
    """Each member predicts, a plurality vote decides, ties per tie_break."""
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"tie_break must be one of {TIE_BREAKS}")
    probs = np.stack([softmax(m.forward(inputs, train=False)) for m in models])
    return _vote(probs, tie_break)


def ensemble_evaluate(
    models: list[SeMsfnModel],
    data: ShardData,
    indices: np.ndarray,
    tie_break: str = "mean_probability",
    batch_size: int = 256,
) -> tuple[EvalReport, list[float]]:
    """EvalReport for the vote plus each member's individual accuracy."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValueError("empty test set")
    k = len(data.label_names)
    confusion = np.zeros((k, k), dtype=np.int64)
    truths, preds, snrs = [], [], []
    member_correct = np.zeros(len(models), dtype=np.int64)
    for batch in batches(data, indices, batch_size, shuffle=False):
        probs = np.stack([softmax(m.forward(batch.inputs, train=False)) for m in models])
        for m in range(len(models)):
            member_correct[m] += int(np.sum(np.argmax(probs[m], axis=1) == batch.labels))
        pred = _vote(probs, tie_break)
        truths.append(batch.labels)
        preds.append(pred)
        snrs.append(batch.snr_tags)
    truth = np.concatenate(truths)
    pred = np.concatenate(preds)
    snr = np.concatenate(snrs)
    np.add.at(confusion, (truth, pred), 1)
    report = EvalReport(
        per_snr_accuracy={
            int(s): float(np.mean(pred[snr == s] == truth[snr == s])) for s in np.unique(snr)
        },
        overall_accuracy=float(np.mean(pred == truth)),
        confusion=confusion,
        per_class_accuracy={
            name: float(np.mean(pred[truth == c] == truth[truth == c]))
            for c, name in enumerate(data.label_names)
            if np.any(truth == c)
        },
        label_names=list(data.label_names),
        n_examples=len(truth),
    )
    return report, (member_correct / len(truth)).tolist()
