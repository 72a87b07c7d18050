"""Deterministic stand-in source signals.

Speech-like signals are white noise shaped by a few random formant
resonances and gated by a syllable-rate envelope with pauses; noise signals
are stationary coloured Gaussian noise. Both are seeded and reproducible.
"""

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from src.core.exceptions import ContractViolationError

TARGET_RMS = 0.1
SYLLABLE_RATE_HZ = 4.0


def _normalize(x: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(x ** 2))
    return x * (TARGET_RMS / rms) if rms > 0 else x


def _check(duration_s: float, sample_rate: int) -> int:
    if duration_s <= 0 or sample_rate <= 0:
        raise ContractViolationError(
            f"duration_s and sample_rate must be positive, got {duration_s}, {sample_rate}"
        )
    return int(round(duration_s * sample_rate))


def _formant_filter(rng: np.random.Generator, sample_rate: int) -> np.ndarray:
    """AR coefficients with three resonances between 300 Hz and 3.5 kHz."""
    a = np.array([1.0])
    for low, high in ((300.0, 900.0), (900.0, 2200.0), (2200.0, 3500.0)):
        freq = rng.uniform(low, min(high, 0.45 * sample_rate))
        radius = rng.uniform(0.90, 0.97)
        theta = 2.0 * np.pi * freq / sample_rate
        a = np.convolve(a, [1.0, -2.0 * radius * np.cos(theta), radius ** 2])
    return a


def speech_like(duration_s: float, sample_rate: int = 16000, seed: int = 0) -> np.ndarray:
    """Non-stationary, speech-coloured test signal normalized to a fixed RMS."""
    n = _check(duration_s, sample_rate)
    rng = np.random.default_rng([seed, 0])
    excitation = rng.standard_normal(n)
    voiced = lfilter([1.0], _formant_filter(rng, sample_rate), excitation)

    t = np.arange(n) / sample_rate
    rate = SYLLABLE_RATE_HZ * rng.uniform(0.8, 1.2)
    envelope = 0.5 * (1.0 - np.cos(2.0 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    # pauses of roughly half a second between phrases
    phrase = rng.uniform(1.5, 3.0)
    gate = (np.mod(t + rng.uniform(0, phrase), phrase) < phrase - 0.5).astype(np.float64)
    smooth = int(0.02 * sample_rate)
    gate = np.convolve(gate, np.ones(smooth) / smooth, mode="same")
    return _normalize(voiced * envelope * gate)


def stationary_noise(
    duration_s: float,
    sample_rate: int = 16000,
    seed: int = 0,
    cutoff_hz: float = 2000.0,
) -> np.ndarray:
    """Low-pass coloured Gaussian noise normalized to a fixed RMS."""
    n = _check(duration_s, sample_rate)
    if not 0 < cutoff_hz < sample_rate / 2:
        raise ContractViolationError(f"cutoff_hz must lie in (0, {sample_rate / 2}), got {cutoff_hz}")
    rng = np.random.default_rng([seed, 1])
    sos = butter(4, cutoff_hz, btype="low", fs=sample_rate, output="sos")
    # a white floor keeps every bin excited
    coloured = sosfilt(sos, rng.standard_normal(n)) + 0.1 * rng.standard_normal(n)
    return _normalize(coloured)
