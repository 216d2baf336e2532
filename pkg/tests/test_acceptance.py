"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``. The learning-experiment
fixtures (dataset synthesis plus four training runs) are session-scoped and
dominate the runtime: expect roughly an hour on a 2-core desktop CPU.
"""

import hashlib
import itertools
import json
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from modclass.cli import main as cli_main
from modclass.datasets import SplitSpec, load_shards, split
from modclass.engine import (
    BatchNorm1D,
    Conv1D,
    Dense,
    GlobalAvgPool1D,
    ReLU,
    Sigmoid,
    Upsample1D,
    grad_check,
    softmax_cross_entropy,
)
from modclass.ensemble import ensemble_evaluate, ensemble_predict
from modclass.model import (
    ModelConfig,
    SeBlock,
    init_model,
    load_model,
    param_count,
    save_model,
)
from modclass.signals import (
    MODE_ORDER,
    measure_snr,
    synth_dataset,
    synth_frame_with_reference,
)
from modclass.training import TrainConfig, evaluate, train

from oracles import conv1d_bruteforce

DESK_MODES = [m.value for m in MODE_ORDER]
DESK_SNRS = list(range(10, 31, 2))
DESK_SEED = 7


def ok(name: str, detail: str = "") -> None:
    print(f"\nACCEPTANCE {name}: PASS {detail}")


# ---------------------------------------------------------------------------
# 1. gradient correctness


def _layer_trial(layer_factory, in_shape, rng, train=True, sample=5):
    """f32 analytic gradients vs central differences on the f64 twin."""
    l64 = layer_factory(np.float64)
    l32 = layer_factory(np.float32)
    x64 = rng.standard_normal(in_shape)
    out = l64.forward(x64, train=train)
    proj = rng.standard_normal(out.shape)

    def loss():
        return float((l64.forward(x64, train=train) * proj).sum())

    x32 = x64.astype(np.float32)
    for p in l32.params():
        p.zero_grad()
    l32.forward(x32, train=train)
    gin32 = l32.backward(proj.astype(np.float32))
    analytic = [gin32.astype(np.float64)] + [p.grad.astype(np.float64) for p in l32.params()]
    arrays = [x64] + [p.value for p in l64.params()]
    return grad_check(loss, arrays, analytic, step=2e-5, sample=sample, rng=rng)


def test_criterion_gradient_correctness():
    started = time.time()
    rng = np.random.default_rng(2024)
    param_rng = np.random.default_rng(77)
    worst = 0.0

    def conv_factory(c_in, c_out, k, stride, padding, weights):
        def build(dtype):
            conv = Conv1D(c_in, c_out, k, stride, padding, dtype=dtype,
                          use_bias=padding == "valid")
            conv.weight.value[...] = weights
            if conv.bias is not None:
                conv.bias.value[...] = 0.1
            return conv

        return build

    for _ in range(100):
        k = int(rng.integers(1, 6))
        stride = int(rng.integers(1, 3))
        padding = "same" if rng.integers(2) else "valid"
        length = int(rng.integers(max(k, 4), 10))
        weights = param_rng.standard_normal((k, 2, 3))
        worst = max(worst, _layer_trial(
            conv_factory(2, 3, k, stride, padding, weights), (2, length, 2), rng))

    def bn_factory(gamma, beta):
        def build(dtype):
            bn = BatchNorm1D(3, dtype=dtype)
            bn.gamma.value[...] = gamma
            bn.beta.value[...] = beta
            return bn

        return build

    for _ in range(100):
        worst = max(worst, _layer_trial(
            bn_factory(param_rng.standard_normal(3) * 0.4 + 1.0, param_rng.standard_normal(3)),
            (2, int(rng.integers(3, 9)), 3), rng))

    for _ in range(100):
        x_shape = (2, int(rng.integers(2, 8)), 2)
        worst = max(worst, _layer_trial(lambda dtype: Sigmoid(), x_shape, rng))
        worst = max(worst, _layer_trial(lambda dtype: GlobalAvgPool1D(), x_shape, rng))
        worst = max(worst, _layer_trial(lambda dtype: Upsample1D(2), x_shape, rng))

    def dense_factory(w, b):
        def build(dtype):
            dense = Dense(w.shape[0], w.shape[1], dtype=dtype)
            dense.weight.value[...] = w
            dense.bias.value[...] = b
            return dense

        return build

    for _ in range(100):
        w = param_rng.standard_normal((4, 3))
        worst = max(worst, _layer_trial(dense_factory(w, param_rng.standard_normal(3)),
                                        (3, 4), rng))

    # ReLU: keep probe points away from the kink
    for _ in range(100):
        r64 = ReLU()
        x = rng.standard_normal((2, 6, 3))
        x += 0.25 * np.sign(x)
        proj = rng.standard_normal(x.shape)
        r32 = ReLU()
        r32.forward(x.astype(np.float32))
        gin32 = r32.backward(proj.astype(np.float32))

        def loss():
            return float((r64.forward(x) * proj).sum())

        worst = max(worst, grad_check(loss, [x], [gin32.astype(np.float64)],
                                      step=2e-5, sample=5, rng=rng))

    # softmax cross-entropy
    for _ in range(100):
        logits = rng.standard_normal((3, 5))
        labels = rng.integers(0, 5, 3)
        _, grad32 = softmax_cross_entropy(logits.astype(np.float32), labels)

        def loss():
            return softmax_cross_entropy(logits, labels)[0]

        worst = max(worst, grad_check(loss, [logits], [grad32.astype(np.float64)],
                                      step=2e-5, sample=4, rng=rng))

    # tiny end-to-end model, 50 random parameters
    cfg = ModelConfig(kernel_size=3, block=1, repetition=1, num_classes=4, base_filters=4)
    model = init_model(cfg, seed=5, dtype=np.float64)
    x = rng.standard_normal((2, 64, 2))
    labels = np.array([1, 3])

    def model_loss():
        return softmax_cross_entropy(model.forward(x, train=True), labels)[0]

    model.zero_grads()
    _, gl = softmax_cross_entropy(model.forward(x, train=True), labels)
    model.backward(gl)
    slots = list(model.slots.values())
    err = grad_check(model_loss, [s.value for s in slots], [s.grad for s in slots],
                     step=2e-5, sample=2, rng=rng)
    worst = max(worst, err)

    elapsed = time.time() - started
    assert worst < 1e-3, f"worst relative error {worst}"
    assert elapsed < 120, f"gradient suite took {elapsed:.0f}s"
    ok("gradient-correctness", f"(max rel err {worst:.2e}, {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# 2. conv oracle equivalence


def test_criterion_conv_oracle_equivalence():
    rng = np.random.default_rng(4096)
    cases = exact = 0
    for length, k, c_in, c_out, stride, padding in itertools.product(
        range(1, 17), range(1, 6), range(1, 4), range(1, 4), (1, 2), ("same", "valid")
    ):
        if padding == "valid" and (length - k) // stride + 1 < 1:
            continue
        x = rng.integers(-8, 9, size=(2, length, c_in)).astype(np.float32)
        conv = Conv1D(c_in, c_out, k, stride, padding)
        conv.weight.value[...] = rng.integers(-8, 9, size=conv.weight.value.shape)
        conv.bias.value[...] = rng.integers(-8, 9, size=c_out)
        expected = conv1d_bruteforce(x, conv.weight.value, conv.bias.value, stride, padding)
        got = conv.forward(x)
        assert np.array_equal(got, expected), (length, k, c_in, c_out, stride, padding)
        cases += 1
        exact += 1
    assert cases > 2000
    ok("conv-oracle-equivalence", f"({cases} shape cases bit-exact)")


# ---------------------------------------------------------------------------
# 3. SE algebra


def test_criterion_se_algebra():
    rng = np.random.default_rng(99)
    for channels, width in ((4, 16), (8, 7), (32, 64)):
        se = SeBlock(channels=channels, reduction=1, name="se")
        u = rng.standard_normal((3, width, channels)).astype(np.float32)
        np.testing.assert_allclose(se.forward(u), 0.5 * u, atol=1e-6)
    for width in (4, 7, 64, 1000):
        v = rng.standard_normal(5).astype(np.float32)
        u = np.broadcast_to(v, (2, width, 5)).copy()
        z = GlobalAvgPool1D().forward(u)[:, 0, :]
        np.testing.assert_array_equal(z, np.tile(v, (2, 1)))
    ok("se-algebra")


# ---------------------------------------------------------------------------
# 4. SNR calibration


def test_criterion_snr_calibration():
    started = time.time()
    worst = 0.0
    for mode in MODE_ORDER:
        for snr in (-10, 0, 10, 20):
            measured = np.empty(1000)
            for i in range(1000):
                frame, clean = synth_frame_with_reference(mode, snr, seed=11, index=i)
                noisy = frame.i_samples.astype(np.float64) + 1j * frame.q_samples.astype(np.float64)
                measured[i] = measure_snr(clean, noisy)
            err = abs(measured.mean() - snr)
            assert err < 0.3, f"{mode.value} at {snr} dB off by {err:.3f} dB"
            worst = max(worst, err)
    ok("snr-calibration", f"(worst mean error {worst:.3f} dB, {time.time() - started:.0f}s)")


# ---------------------------------------------------------------------------
# 5. architecture grid totality


GRID_ROWS = [
    (4, 1, 3), (3, 1, 3), (2, 1, 3), (1, 1, 3),
    (4, 1, 2), (3, 1, 2), (2, 1, 2), (1, 1, 2),
    (4, 1, 1), (3, 1, 1), (2, 1, 1), (1, 1, 1),
    (4, 4, 2), (4, 8, 2), (4, 12, 2), (4, 16, 2),
]
KERNEL_SIZES = (3, 5, 7, 8, 9, 11, 13, 15)


def test_criterion_architecture_grid_totality():
    started = time.time()
    x = np.random.default_rng(0).standard_normal((4, 1024, 2)).astype(np.float32)
    counts = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for block, reduction, repetition in GRID_ROWS:
            cfg = ModelConfig(kernel_size=8, block=block, reduction_ratio=reduction,
                              repetition=repetition, num_classes=24)
            model = init_model(cfg, seed=1)
            logits = model.forward(x)
            assert logits.shape == (4, 24) and np.all(np.isfinite(logits))
            counts[(block, reduction, repetition)] = model.param_count()
        for k in KERNEL_SIZES:
            model = init_model(ModelConfig(kernel_size=k, num_classes=24), seed=1)
            logits = model.forward(x)
            assert logits.shape == (4, 24) and np.all(np.isfinite(logits))
    # affine in kernel size: exact structural identity
    by_k = {k: param_count(ModelConfig(kernel_size=k, num_classes=24))
            for k in (5, 7, 9, 11, 13, 15)}
    assert len({by_k[k] - by_k[k - 2] for k in (7, 9, 11, 13, 15)}) == 1
    # monotone in block and repetition
    for rep in (1, 2, 3):
        seq = [counts[(b, 1, rep)] for b in (1, 2, 3, 4)]
        assert seq == sorted(seq) and len(set(seq)) == 4
    for block in (1, 2, 3, 4):
        seq = [counts[(block, 1, rep)] for rep in (1, 2, 3)]
        assert seq == sorted(seq) and len(set(seq)) == 3
    default = param_count(ModelConfig(kernel_size=9, num_classes=24))
    assert 235_000 <= default <= 435_000
    elapsed = time.time() - started
    assert elapsed < 300, f"grid sweep took {elapsed:.0f}s"
    ok("architecture-grid-totality",
       f"(16 rows + 8 kernel sizes, default {default:,} params, {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# learning-experiment fixtures (shared by criteria 6-8)


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_data")
    synth_dataset(DESK_MODES, DESK_SNRS, frames_per_cell=200, seed=DESK_SEED, out_dir=out)
    data = load_shards(out)
    train_idx, val_idx, test_idx = split(data, SplitSpec(seed=0))
    return out, data, train_idx, val_idx, test_idx


def _train_desk(data, train_idx, val_idx, kernel_size, use_se=True, seed=DESK_SEED):
    cfg = ModelConfig(kernel_size=kernel_size, num_classes=len(data.label_names), use_se=use_se)
    model = init_model(cfg, seed=seed)
    tcfg = TrainConfig(epochs=30, batch_size=128, lr=0.001, seed=seed,
                       target_val_accuracy=0.95, early_stop_patience=5)
    t0 = time.time()
    tag = f"k{kernel_size}{'' if use_se else '-noSE'}"
    model, curve = train(model, data, train_idx, val_idx, tcfg,
                         log=lambda m: print(f"  [{tag} {time.time() - t0:5.0f}s] {m}"))
    return model, curve


@pytest.fixture(scope="session")
def desk_k9(desk_dataset):
    _, data, train_idx, val_idx, _ = desk_dataset
    return _train_desk(data, train_idx, val_idx, kernel_size=9)


@pytest.fixture(scope="session")
def desk_k9_nose(desk_dataset):
    _, data, train_idx, val_idx, _ = desk_dataset
    return _train_desk(data, train_idx, val_idx, kernel_size=9, use_se=False)


@pytest.fixture(scope="session")
def desk_members(desk_dataset, desk_k9, tmp_path_factory):
    _, data, train_idx, val_idx, _ = desk_dataset
    out = tmp_path_factory.mktemp("members")
    save_model(desk_k9[0], out / "k9.ckpt")
    for k, seed in ((13, DESK_SEED + 1), (15, DESK_SEED + 2)):
        model, _ = _train_desk(data, train_idx, val_idx, kernel_size=k, seed=seed)
        save_model(model, out / f"k{k}.ckpt")
    return [out / "k9.ckpt", out / "k13.ckpt", out / "k15.ckpt"]


# ---------------------------------------------------------------------------
# 6. desk learning experiment


def test_criterion_desk_learning_experiment(desk_dataset, desk_k9):
    _, data, _, _, test_idx = desk_dataset
    model, curve = desk_k9
    best_val = max(curve.val_accuracy)
    assert len(curve) <= 30
    assert best_val >= 0.90, f"validation accuracy {best_val:.4f} < 0.90"
    report = evaluate(model, data, test_idx)
    acc10, acc30 = report.per_snr_accuracy[10], report.per_snr_accuracy[30]
    assert acc30 >= acc10, f"accuracy at +30 dB ({acc30:.4f}) < +10 dB ({acc10:.4f})"
    ok("desk-learning-experiment",
       f"(val {best_val:.4f} in {len(curve)} epochs; test +10dB {acc10:.4f}, +30dB {acc30:.4f})")


# ---------------------------------------------------------------------------
# 7. SE ablation trend


def test_criterion_se_ablation_trend(desk_k9, desk_k9_nose):
    model_se, curve_se = desk_k9
    model_no, curve_no = desk_k9_nose
    acc_se, acc_no = max(curve_se.val_accuracy), max(curve_no.val_accuracy)
    assert acc_se >= acc_no - 0.01, f"SE {acc_se:.4f} vs no-SE {acc_no:.4f}"
    assert model_se.param_count() > model_no.param_count()
    ok("se-ablation-trend",
       f"(SE {acc_se:.4f} / {model_se.param_count():,} params vs "
       f"no-SE {acc_no:.4f} / {model_no.param_count():,})")


# ---------------------------------------------------------------------------
# 8. ensemble trend


def test_criterion_ensemble_trend(desk_dataset, desk_members):
    _, data, _, _, test_idx = desk_dataset
    models = [load_model(p) for p in desk_members]
    report, member_accs = ensemble_evaluate(models, data, test_idx)
    best = max(member_accs)
    assert report.overall_accuracy >= best - 0.005, (
        f"ensemble {report.overall_accuracy:.4f} vs best member {best:.4f}")

    rng = np.random.default_rng(31337)
    frames = rng.standard_normal((1000, 1024, 2)).astype(np.float32)
    member_preds = []
    ens_pred = []
    for start in range(0, 1000, 250):
        chunk = frames[start : start + 250]
        member_preds.append(np.stack([
            np.argmax(m.forward(chunk, train=False), axis=1) for m in models]))
        ens_pred.append(ensemble_predict(models, chunk))
    member_preds = np.concatenate(member_preds, axis=1)
    ens_pred = np.concatenate(ens_pred)
    unanimous = (member_preds == member_preds[0]).all(axis=0)
    assert np.array_equal(ens_pred[unanimous], member_preds[0][unanimous])
    for perm in itertools.permutations(range(3)):
        perm_pred = np.concatenate([
            ensemble_predict([models[i] for i in perm], frames[s : s + 250])
            for s in range(0, 1000, 250)])
        assert np.array_equal(perm_pred, ens_pred)
    ok("ensemble-trend",
       f"(ensemble {report.overall_accuracy:.4f} vs members "
       f"{', '.join(f'{a:.4f}' for a in member_accs)}; "
       f"{int(unanimous.sum())}/1000 unanimous frames consistent)")


# ---------------------------------------------------------------------------
# 9. determinism


def _hash_tree(path: Path, skip=("run_manifest.json",)) -> dict:
    out = {}
    for p in sorted(path.rglob("*")):
        if p.is_file() and p.name not in skip:
            out[str(p.relative_to(path))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_criterion_determinism(tmp_path):
    def run(tag: str) -> dict:
        root = tmp_path / tag
        data = root / "data"
        assert cli_main(["--threads", "1", "synth", "--modes", "BPSK,QPSK,GMSK",
                         "--snr-min", "0", "--snr-max", "10", "--snr-step", "10",
                         "--frames-per-cell", "15", "--seed", "5", "--out", str(data)]) == 0
        run_dir = root / "train"
        assert cli_main(["--threads", "1", "train", "--data", str(data),
                         "--kernel-size", "3", "--blocks", "1", "--repetition", "1",
                         "--base-filters", "4", "--epochs", "2", "--batch-size", "16",
                         "--seed", "5", "--out", str(run_dir)]) == 0
        eval_dir = root / "eval"
        assert cli_main(["--threads", "1", "eval", "--checkpoint", str(run_dir / "model.ckpt"),
                         "--data", str(data), "--out", str(eval_dir)]) == 0
        return _hash_tree(root)

    first = run("a")
    second = run("b")
    assert first == second
    assert len(first) >= 6
    ok("determinism", f"({len(first)} artifacts byte-identical across two runs)")
