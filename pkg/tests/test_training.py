import json

import numpy as np
import pytest

from modclass.datasets import ShardData
from modclass.engine import softmax_cross_entropy
from modclass.engine.layers import EngineNumericsError
from modclass.engine.optim import adam_step
from modclass.model import ModelConfig, init_model
from modclass.training import (
    EvalReport,
    TrainConfig,
    band_average,
    evaluate,
    rebuild_summary,
    report_csv,
    train,
)

TINY = ModelConfig(kernel_size=3, block=1, repetition=1, num_classes=2, base_filters=4)


def separable_data(n=40, length=64, seed=0, classes=2, snrs=(0, 10)):
    """Class c has mean level c-centered I channel: trivially learnable."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    snr = np.array([snrs[i % len(snrs)] for i in range(n)])
    inputs = 0.3 * rng.standard_normal((n, length, 2)).astype(np.float32)
    inputs[:, :, 0] += (2.0 * labels[:, None] - 1.0).astype(np.float32)
    return ShardData(inputs=inputs, labels=labels, snrs=snr,
                     label_names=[f"c{i}" for i in range(classes)])


class StubModel:
    """Fixed-prediction classifier for evaluation-path tests."""

    def __init__(self, predict_fn, num_classes):
        self.predict_fn = predict_fn
        self.num_classes = num_classes

    def forward(self, inputs, train=False):
        pred = self.predict_fn(inputs)
        logits = np.zeros((len(inputs), self.num_classes), dtype=np.float32)
        logits[np.arange(len(inputs)), pred] = 10.0
        return logits


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)


def test_train_rejects_overlapping_sets():
    data = separable_data()
    model = init_model(TINY, seed=0)
    with pytest.raises(ValueError):
        train(model, data, np.arange(10), np.arange(5, 15), TrainConfig(epochs=1))


def test_single_example_memorization():
    data = separable_data(n=2)
    model = init_model(TINY, seed=1)
    cfg = TrainConfig(epochs=200, batch_size=1, lr=0.001, seed=0)
    model, curve = train(model, data, np.array([0]), np.array([1]), cfg)
    assert curve.train_accuracy[-1] == 1.0


def test_loss_decreases_over_first_steps():
    data = separable_data(n=16, seed=3)
    model = init_model(TINY, seed=2)
    batch_inputs = data.inputs
    labels = data.labels
    losses = []
    for _ in range(6):
        model.zero_grads()
        logits = model.forward(batch_inputs, train=True)
        loss, grad = softmax_cross_entropy(logits, labels)
        losses.append(loss)
        model.backward(grad)
        for slot in model.slots.values():
            adam_step(slot, 0.001)
    assert np.mean(losses[1:6]) <= losses[0]


def test_training_learns_separable_data():
    data = separable_data(n=60, seed=5)
    model = init_model(TINY, seed=3)
    train_idx, val_idx = np.arange(40), np.arange(40, 60)
    model, curve = train(model, data, train_idx, val_idx,
                         TrainConfig(epochs=10, batch_size=16, seed=1))
    assert curve.val_accuracy[-1] >= 0.9


def test_training_deterministic():
    data = separable_data(n=30, seed=7)
    cfg = TrainConfig(epochs=3, batch_size=8, seed=11)
    curves = []
    for _ in range(2):
        model = init_model(TINY, seed=4)
        _, curve = train(model, data, np.arange(20), np.arange(20, 30), cfg)
        curves.append(curve)
    assert curves[0].train_loss == curves[1].train_loss
    assert curves[0].val_accuracy == curves[1].val_accuracy


def test_best_validation_checkpoint_restored():
    data = separable_data(n=30, seed=9)
    model = init_model(TINY, seed=5)
    model, curve = train(model, data, np.arange(20), np.arange(20, 30),
                         TrainConfig(epochs=4, batch_size=8, seed=2))
    best_epoch = int(np.argmax(curve.val_accuracy))
    _, val_acc_now = (lambda r: (None, r.overall_accuracy))(
        evaluate(model, data, np.arange(20, 30))
    )
    assert val_acc_now == pytest.approx(curve.val_accuracy[best_epoch])


def test_target_accuracy_stops_early():
    data = separable_data(n=60, seed=5)
    model = init_model(TINY, seed=3)
    cfg = TrainConfig(epochs=50, batch_size=16, seed=1, target_val_accuracy=0.9)
    model, curve = train(model, data, np.arange(40), np.arange(40, 60), cfg)
    assert len(curve) < 50
    assert curve.val_accuracy[-1] >= 0.9


def test_nonfinite_loss_aborts_with_layer_name():
    data = separable_data(n=8, seed=1)
    model = init_model(TINY, seed=0)
    model.slots["first.conv1.weight"].value[0, 0, 0] = np.nan
    with pytest.raises(EngineNumericsError, match="first.conv1"):
        train(model, data, np.arange(6), np.arange(6, 8), TrainConfig(epochs=1, batch_size=4))


# ---------------------------------------------------------------------------
# evaluation


def test_perfect_stub_diagonal_confusion():
    data = separable_data(n=24)
    truth = {id(None): None}
    stub = StubModel(lambda inputs: (inputs[:, :, 0].mean(axis=1) > 0).astype(int), 2)
    report = evaluate(stub, data, np.arange(24))
    assert report.overall_accuracy == 1.0
    assert np.all(report.confusion == np.diag(np.diag(report.confusion)))
    assert all(v == 1.0 for v in report.per_snr_accuracy.values())
    assert report.confusion.sum() == 24


def test_constant_stub_on_balanced_data():
    data = separable_data(n=30, classes=2)
    stub = StubModel(lambda inputs: np.zeros(len(inputs), dtype=int), 2)
    report = evaluate(stub, data, np.arange(30))
    assert report.overall_accuracy == pytest.approx(0.5)


def test_snr_bin_average_recomposes_overall():
    data = separable_data(n=40, seed=13)
    rng = np.random.default_rng(0)
    stub = StubModel(lambda inputs: rng.integers(0, 2, len(inputs)), 2)
    report = evaluate(stub, data, np.arange(40))
    weighted = sum(
        report.per_snr_accuracy[s] * np.sum(data.snrs == s) for s in report.per_snr_accuracy
    )
    assert weighted / 40 == pytest.approx(report.overall_accuracy)


def test_confusion_snr_filter():
    data = separable_data(n=40)
    stub = StubModel(lambda inputs: (inputs[:, :, 0].mean(axis=1) > 0).astype(int), 2)
    report = evaluate(stub, data, np.arange(40), confusion_snr=10)
    assert report.confusion.sum() == int(np.sum(data.snrs == 10))


def test_evaluate_batch_size_invariance():
    data = separable_data(n=50, seed=21)
    model = init_model(TINY, seed=6)
    a = evaluate(model, data, np.arange(50), batch_size=7)
    b = evaluate(model, data, np.arange(50), batch_size=50)
    assert a.overall_accuracy == b.overall_accuracy
    np.testing.assert_array_equal(a.confusion, b.confusion)


def test_evaluate_rejects_empty():
    data = separable_data(n=4)
    with pytest.raises(ValueError):
        evaluate(init_model(TINY, seed=0), data, np.array([], dtype=int))


# ---------------------------------------------------------------------------
# reporting


def make_report():
    return EvalReport(
        per_snr_accuracy={0: 0.5, 10: 0.75, 30: 1.0},
        overall_accuracy=0.75,
        confusion=np.array([[3, 1], [1, 3]]),
        per_class_accuracy={"a": 0.75, "b": 0.75},
        label_names=["a", "b"],
        n_examples=8,
    )


def test_band_average_definition():
    assert band_average({0: 0.2, 2: 0.4, 10: 0.6, 20: 1.0}) == pytest.approx((0.2 + 0.4 + 0.6) / 3)
    assert band_average({20: 1.0, 30: 1.0}) is None


def test_summary_mirrors_report(tmp_path):
    report = make_report()
    files = report_csv(report, None, tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["overall_accuracy"] == report.overall_accuracy
    assert summary["max_single_snr_accuracy"] == 1.0
    assert summary["accuracy_0_to_10db"] == pytest.approx((0.5 + 0.75) / 2)
    assert summary["per_snr_accuracy"] == {"0": 0.5, "10": 0.75, "30": 1.0}
    assert (tmp_path / "curves.csv") not in files


def test_empty_snr_bins_omitted(tmp_path):
    report = make_report()
    report_csv(report, None, tmp_path)
    rows = (tmp_path / "accuracy_by_snr.csv").read_text().strip().splitlines()
    assert rows[0] == "snr_db,accuracy"
    assert len(rows) == 4  # header + the three present bins only


def test_rebuild_summary_idempotent(tmp_path):
    report = make_report()
    report_csv(report, None, tmp_path)
    original = (tmp_path / "summary.json").read_bytes()
    rebuild_summary(tmp_path)
    assert (tmp_path / "summary.json").read_bytes() == original


def test_curves_csv_written(tmp_path):
    from modclass.training import TrainingCurve

    curve = TrainingCurve([1.0, 0.5], [0.5, 0.8], [0.9, 0.6], [0.6, 0.7])
    report_csv(make_report(), curve, tmp_path)
    rows = (tmp_path / "curves.csv").read_text().strip().splitlines()
    assert rows[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
    assert len(rows) == 3
