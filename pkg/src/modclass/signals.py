"""Labeled I/Q frame synthesis for a 9-mode modulation set under AWGN.

The channel model is s(k) = A * exp(j*(2*pi*f0*k + theta_k)) * sum_n x(n) h(k - n*sps)
plus complex white Gaussian noise injected separately at a calibrated SNR.
Linear modes (OOK/ASK/PSK/QAM) use Gray-coded unit-power constellations with
root-raised-cosine shaping by default; GMSK uses a Gaussian phase pulse with
BT = 0.3 and FM modulates a band-limited Gaussian message.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

FRAME_LEN = 1024

DEFAULT_SNR_GRID = tuple(range(-20, 31, 2))


class ModulationMode(enum.Enum):
    """Supported modulation tags; each maps to exactly one waveform generator."""

    OOK = "OOK"
    ASK4 = "4ASK"
    BPSK = "BPSK"
    QPSK = "QPSK"
    PSK8 = "8PSK"
    QAM16 = "16QAM"
    QAM64 = "64QAM"
    GMSK = "GMSK"
    FM = "FM"

    @classmethod
    def from_tag(cls, tag: str) -> "ModulationMode":
        for mode in cls:
            if mode.value == tag:
                return mode
        raise ValueError(f"unsupported modulation mode {tag!r}")


# Canonical ordering; also the default label order for synthesized datasets.
MODE_ORDER: tuple[ModulationMode, ...] = tuple(ModulationMode)

_LINEAR_BITS = {
    ModulationMode.OOK: 1,
    ModulationMode.ASK4: 2,
    ModulationMode.BPSK: 1,
    ModulationMode.QPSK: 2,
    ModulationMode.PSK8: 3,
    ModulationMode.QAM16: 4,
    ModulationMode.QAM64: 6,
}


@dataclass
class ImpairmentConfig:
    """Channel impairments and pulse shaping; defaults are a clean channel."""

    amplitude_fade: float = 1.0
    carrier_offset: float = 0.0  # cycles/sample
    phase_jitter_std: float = 0.0  # radians
    timing_error: float = 0.0  # fraction of a symbol period
    samples_per_symbol: int = 8
    pulse_shape: str = "rrc"  # rrc | rect | none
    rrc_rolloff: float = 0.35
    filter_span: int = 8  # symbols

    def __post_init__(self) -> None:
        if self.amplitude_fade <= 0:
            raise ValueError("amplitude_fade must be > 0")
        if self.samples_per_symbol < 2:
            raise ValueError("samples_per_symbol must be >= 2")
        if not 0.0 <= self.timing_error < 1.0:
            raise ValueError("timing_error must be in [0, 1)")
        if not 0.0 <= self.rrc_rolloff <= 1.0:
            raise ValueError("rrc_rolloff must be in [0, 1]")
        if self.pulse_shape not in ("rrc", "rect", "none"):
            raise ValueError(f"unknown pulse shape {self.pulse_shape!r}")


@dataclass
class IqFrame:
    """One labeled example: 1024 complex samples split into I and Q."""

    i_samples: np.ndarray
    q_samples: np.ndarray
    label: str
    snr_db: int

    def __post_init__(self) -> None:
        self.i_samples = np.asarray(self.i_samples, dtype=np.float32)
        self.q_samples = np.asarray(self.q_samples, dtype=np.float32)
        if self.i_samples.shape != self.q_samples.shape:
            raise ValueError("I and Q must have identical length")


# ---------------------------------------------------------------------------
# constellations


def _gray_inverse(v: int) -> int:
    n = 0
    while v:
        n ^= v
        v >>= 1
    return n


def _gray_positions(bits: int) -> np.ndarray:
    """positions[v] = constellation slot whose Gray label is bit pattern v."""
    return np.array([_gray_inverse(v) for v in range(1 << bits)])


def constellation(mode: ModulationMode) -> np.ndarray:
    """Complex symbol table indexed by bit-pattern value, mean power 1.0."""
    if mode == ModulationMode.OOK:
        return np.array([0.0, math.sqrt(2.0)], dtype=complex)
    if mode == ModulationMode.BPSK:
        return np.array([1.0, -1.0], dtype=complex)
    if mode == ModulationMode.ASK4:
        pos = _gray_positions(2)
        levels = 2.0 * pos - 3.0
        return (levels / math.sqrt(5.0)).astype(complex)
    if mode == ModulationMode.QPSK:
        pos = _gray_positions(2)
        return np.exp(1j * (2.0 * np.pi * pos / 4.0 + np.pi / 4.0))
    if mode == ModulationMode.PSK8:
        pos = _gray_positions(3)
        return np.exp(1j * 2.0 * np.pi * pos / 8.0)
    if mode in (ModulationMode.QAM16, ModulationMode.QAM64):
        half = _LINEAR_BITS[mode] // 2
        pos = _gray_positions(half)
        levels = 2.0 * pos - (len(pos) - 1)
        grid = levels[:, None] + 1j * levels[None, :]
        norm = math.sqrt(np.mean(np.abs(levels) ** 2) * 2.0)
        table = np.empty((1 << half, 1 << half), dtype=complex)
        for vi in range(1 << half):
            for vq in range(1 << half):
                table[vi, vq] = grid[vi, vq]
        return (table / norm).reshape(-1)
    raise ValueError(f"{mode} has no constellation (analog/continuous-phase mode)")


def map_bits_to_symbols(mode: ModulationMode, bits: np.ndarray) -> np.ndarray:
    """Gray-map a flat bit array onto constellation points."""
    nbits = _LINEAR_BITS[mode]
    if len(bits) % nbits:
        raise ValueError(f"bit count must be a multiple of {nbits}")
    table = constellation(mode)
    values = np.zeros(len(bits) // nbits, dtype=np.int64)
    for b in range(nbits):
        values = (values << 1) | bits[b::nbits]
    return table[values]


# ---------------------------------------------------------------------------
# filters


def rrc_taps(rolloff: float, sps: int, span: int) -> np.ndarray:
    """Root-raised-cosine impulse response, unit energy."""
    n = span * sps
    t = np.arange(-n / 2, n / 2 + 1) / sps
    taps = np.empty_like(t)
    eps = 1e-12
    for i, ti in enumerate(t):
        if abs(ti) < eps:
            taps[i] = 1.0 - rolloff + 4.0 * rolloff / np.pi
        elif rolloff > 0 and abs(abs(ti) - 1.0 / (4.0 * rolloff)) < eps:
            taps[i] = (rolloff / math.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * math.sin(np.pi / (4.0 * rolloff))
                + (1.0 - 2.0 / np.pi) * math.cos(np.pi / (4.0 * rolloff))
            )
        else:
            taps[i] = (
                math.sin(np.pi * ti * (1.0 - rolloff))
                + 4.0 * rolloff * ti * math.cos(np.pi * ti * (1.0 + rolloff))
            ) / (np.pi * ti * (1.0 - (4.0 * rolloff * ti) ** 2))
    return taps / math.sqrt(np.sum(taps**2))


def _lowpass_taps(cutoff: float, numtaps: int) -> np.ndarray:
    """Windowed-sinc FIR lowpass; cutoff in cycles/sample, unit DC gain."""
    n = np.arange(numtaps) - (numtaps - 1) / 2.0
    taps = 2.0 * cutoff * np.sinc(2.0 * cutoff * n)
    taps *= np.hamming(numtaps)
    return taps / taps.sum()


def _gmsk_phase_pulse(bt: float, sps: int, span: int) -> np.ndarray:
    """Gaussian-filtered rectangular frequency pulse, area pi/2 per symbol."""
    sigma = math.sqrt(math.log(2.0)) / (2.0 * np.pi * bt) * sps
    n = np.arange(-span * sps // 2, span * sps // 2 + 1)
    gauss = np.exp(-0.5 * (n / sigma) ** 2)
    pulse = np.convolve(gauss, np.ones(sps))
    return pulse * (np.pi / 2.0) / pulse.sum()


# ---------------------------------------------------------------------------
# modulators


def _shape_linear(symbols: np.ndarray, imp: ImpairmentConfig) -> np.ndarray:
    sps = imp.samples_per_symbol
    train = np.zeros(len(symbols) * sps, dtype=complex)
    train[::sps] = symbols
    if imp.pulse_shape == "rrc":
        taps = rrc_taps(imp.rrc_rolloff, sps, imp.filter_span)
        return np.convolve(train, taps, mode="valid")
    if imp.pulse_shape == "rect":
        return np.repeat(symbols, sps)
    return train  # "none": unshaped impulse train


def _gen_linear(mode, rng, n_symbols, imp):
    nbits = _LINEAR_BITS[mode]
    bits = rng.integers(0, 2, size=n_symbols * nbits)
    return _shape_linear(map_bits_to_symbols(mode, bits), imp)


def _gen_gmsk(rng, n_symbols, imp, bt: float = 0.3, span: int = 4):
    sps = imp.samples_per_symbol
    nrz = 2.0 * rng.integers(0, 2, size=n_symbols) - 1.0
    train = np.zeros(n_symbols * sps)
    train[::sps] = nrz
    freq = np.convolve(train, _gmsk_phase_pulse(bt, sps, span))
    phase = np.cumsum(freq)
    signal = np.exp(1j * phase)
    trim = (span + 1) * sps
    return signal[trim:-trim] if len(signal) > 2 * trim else signal


def _gen_fm(rng, n_samples, cutoff: float = 0.05, mod_index: float = 1.0):
    numtaps = 129
    raw = rng.standard_normal(n_samples + numtaps)
    message = np.convolve(raw, _lowpass_taps(cutoff, numtaps), mode="valid")
    message = message / max(np.sqrt(np.mean(message**2)), 1e-12)
    phase = 2.0 * np.pi * mod_index * cutoff * np.cumsum(message)
    return np.exp(1j * phase)[:n_samples]


def modulate(
    mode: ModulationMode,
    seed,
    n_symbols: int,
    imp: ImpairmentConfig | None = None,
) -> np.ndarray:
    """Noise-free modulated baseband, impairments applied, mean power A**2.

    The returned sequence is trimmed of filter transients and must still cover
    a full frame; seeds may be ints or numpy SeedSequences/Generators.
    """
    imp = imp or ImpairmentConfig()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mode = ModulationMode.from_tag(mode) if isinstance(mode, str) else mode
    if mode in _LINEAR_BITS:
        signal = _gen_linear(mode, rng, n_symbols, imp)
    elif mode == ModulationMode.GMSK:
        signal = _gen_gmsk(rng, n_symbols, imp)
    elif mode == ModulationMode.FM:
        signal = _gen_fm(rng, n_symbols * imp.samples_per_symbol)
    else:
        raise ValueError(f"unsupported mode {mode}")
    if len(signal) < FRAME_LEN:
        raise ValueError(
            f"n_symbols={n_symbols} yields only {len(signal)} samples after "
            f"transient trimming; a frame needs {FRAME_LEN}"
        )
    if imp.timing_error:
        delay = imp.timing_error * imp.samples_per_symbol
        whole, frac = int(delay), delay - int(delay)
        shifted = signal[whole:]
        if frac:
            shifted = (1.0 - frac) * shifted[:-1] + frac * shifted[1:]
        signal = shifted
    k = np.arange(len(signal))
    if imp.carrier_offset or imp.phase_jitter_std:
        theta = rng.normal(0.0, imp.phase_jitter_std, size=len(signal)) if imp.phase_jitter_std else 0.0
        signal = signal * np.exp(1j * (2.0 * np.pi * imp.carrier_offset * k + theta))
    power = np.mean(np.abs(signal) ** 2)
    if power <= 0:
        raise ValueError("degenerate all-zero signal")
    return signal * (imp.amplitude_fade / math.sqrt(power))


def add_awgn(signal: np.ndarray, snr_db: float, seed) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise at the requested SNR.

    Noise power is p_n = p_s * 10**(-snr_db/10) against the measured mean
    power of the input, split equally between I and Q.
    """
    signal = np.asarray(signal)
    if signal.size == 0:
        raise ValueError("empty signal")
    if not np.all(np.isfinite(signal.view(float))):
        raise ValueError("non-finite input")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p_s = np.mean(np.abs(signal) ** 2)
    p_n = p_s * 10.0 ** (-snr_db / 10.0)
    scale = math.sqrt(p_n / 2.0)
    noise = scale * (rng.standard_normal(signal.shape) + 1j * rng.standard_normal(signal.shape))
    return signal + noise


def measure_snr(clean: np.ndarray, noisy: np.ndarray) -> float:
    """10*log10(p_signal / p_noise); +inf when the sequences are identical."""
    clean = np.asarray(clean)
    noisy = np.asarray(noisy)
    if clean.shape != noisy.shape:
        raise ValueError("length mismatch")
    p_s = np.mean(np.abs(clean) ** 2)
    p_n = np.mean(np.abs(noisy - clean) ** 2)
    if p_n == 0.0:
        return math.inf
    return 10.0 * math.log10(p_s / p_n)


# ---------------------------------------------------------------------------
# frames and datasets


def _frame_seed(root_seed: int, mode: ModulationMode, snr_db: int, index: int):
    return np.random.SeedSequence(
        [int(root_seed), MODE_ORDER.index(mode), int(snr_db) + 1000, int(index)]
    )


def _symbols_for_frame(imp: ImpairmentConfig) -> int:
    taps = imp.filter_span * imp.samples_per_symbol + 1
    return -(-(FRAME_LEN + taps) // imp.samples_per_symbol) + 2


def synth_frame_with_reference(
    mode: ModulationMode,
    snr_db: int,
    imp: ImpairmentConfig | None = None,
    seed: int = 0,
    index: int = 0,
) -> tuple[IqFrame, np.ndarray]:
    """Synthesize one frame plus its noise-free 1024-sample reference."""
    imp = imp or ImpairmentConfig()
    mode = ModulationMode.from_tag(mode) if isinstance(mode, str) else mode
    ss = _frame_seed(seed, mode, snr_db, index)
    mod_rng, noise_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    clean = modulate(mode, mod_rng, _symbols_for_frame(imp), imp)
    noisy = add_awgn(clean, snr_db, noise_rng)[:FRAME_LEN]
    frame = IqFrame(
        i_samples=noisy.real.astype(np.float32),
        q_samples=noisy.imag.astype(np.float32),
        label=mode.value,
        snr_db=int(snr_db),
    )
    return frame, clean[:FRAME_LEN]


def synth_frame(mode, snr_db: int, imp: ImpairmentConfig | None = None, seed: int = 0,
                index: int = 0) -> IqFrame:
    """Deterministic labeled frame for (mode, snr_db, imp, seed, index)."""
    return synth_frame_with_reference(mode, snr_db, imp, seed, index)[0]


def synth_dataset(
    modes,
    snr_grid,
    frames_per_cell: int,
    imp: ImpairmentConfig | None = None,
    seed: int = 0,
    out_dir=None,
    shard_size: int | None = None,
):
    """Write a stratified-shuffled shard dataset plus its manifest.

    Returns the manifest dict. ``out_dir`` is required; shards land there as
    ``data_NNN.iqs`` with ``manifest.json`` alongside.
    """
    from pathlib import Path

    from modclass import datasets

    if frames_per_cell < 1:
        raise ValueError("frames_per_cell must be >= 1")
    modes = [ModulationMode.from_tag(m) if isinstance(m, str) else m for m in modes]
    if not modes:
        raise ValueError("empty mode set")
    if out_dir is None:
        raise ValueError("out_dir is required")
    imp = imp or ImpairmentConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    cells = [(m, int(s)) for m in modes for s in snr_grid]
    order = [(m, s, i) for (m, s) in cells for i in range(frames_per_cell)]
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xD5]))
    shuffle_rng.shuffle(order)

    frames = [synth_frame(m, s, imp, seed, i) for (m, s, i) in order]
    label_names = [m.value for m in modes]
    size = shard_size or len(frames)
    shard_files = []
    for si in range(0, len(frames), size):
        name = f"data_{si // size:03d}.iqs"
        datasets.write_shard(frames[si : si + size], out_dir / name, label_names)
        shard_files.append(name)

    manifest = {
        "modes": label_names,
        "snr_grid": [int(s) for s in snr_grid],
        "frames_per_cell": int(frames_per_cell),
        "frame_count": len(frames),
        "impairments": {
            "amplitude_fade": imp.amplitude_fade,
            "carrier_offset": imp.carrier_offset,
            "phase_jitter_std": imp.phase_jitter_std,
            "timing_error": imp.timing_error,
            "samples_per_symbol": imp.samples_per_symbol,
            "pulse_shape": imp.pulse_shape,
            "rrc_rolloff": imp.rrc_rolloff,
            "filter_span": imp.filter_span,
            "fm_message_cutoff": 0.05,
            "fm_modulation_index": 1.0,
            "gmsk_bt": 0.3,
        },
        "root_seed": int(seed),
        "shards": shard_files,
        "cells": {f"{m.value}/{s}": frames_per_cell for (m, s) in cells},
    }
    datasets.write_json_atomic(out_dir / "manifest.json", manifest)
    return manifest
