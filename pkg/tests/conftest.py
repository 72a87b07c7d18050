"""Shared fixtures: seeded generators, analytic transfer systems, tiny scenarios."""

import json
from pathlib import Path

import numpy as np
import pytest

from src.adapters.audio.wav_adapter import write_wav
from src.core.audio_model import AudioBuffer
from src.core.scenario_model import Scenario
from src.dsp import synthetic


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_system(rng):
    """Factory for random transfer functions h_a (bins, Q_A, L) and h_b (bins, Q_B, L)."""

    def _make(bins=4, q_a=6, q_b=8, sources=3):
        return complex_gaussian(rng, (bins, q_a, sources)), complex_gaussian(rng, (bins, q_b, sources))

    return _make


@pytest.fixture
def signal_dir(tmp_path):
    """Two speech-like and one noise signal, 10 s each at 16 kHz."""
    directory = tmp_path / "signals"
    for i in range(2):
        write_wav(directory / f"speech_{i}.wav", AudioBuffer(synthetic.speech_like(10.0, 16000, seed=i), 16000))
    write_wav(directory / "noise_0.wav", AudioBuffer(synthetic.stationary_noise(10.0, 16000, seed=5), 16000))
    return directory


def tiny_scenario_dict(signal_dir: Path) -> dict:
    return {
        "scenario_id": "tiny",
        "room": {"dimensions": [3.0, 3.5, 2.5], "t60": 0.15},
        "sources": [
            {"kind": "speech", "signal_path": str(signal_dir / "speech_0.wav"), "position": [0.8, 0.9, 1.4]},
            {"kind": "speech", "signal_path": str(signal_dir / "speech_1.wav"), "position": [2.2, 1.0, 1.5]},
            {"kind": "noise", "signal_path": str(signal_dir / "noise_0.wav"), "position": [1.5, 2.9, 1.2]},
        ],
        "microphones": [
            [1.2, 1.6, 1.0], [1.8, 1.6, 1.0], [1.5, 2.0, 1.0],
            [1.1, 2.1, 1.1], [1.9, 2.1, 1.1], [1.5, 1.4, 1.2],
        ],
        "group_a": [0, 1, 2],
        "group_b": [3, 4, 5],
        "snr_db": 0.0,
        "sensor_noise_snr_db": 50.0,
        "seed": 3,
        "duration_s": 3.0,
        "calibration_duration_s": 6.0,
    }


@pytest.fixture
def tiny_scenario_file(tmp_path, signal_dir):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_scenario_dict(signal_dir)))
    return path


@pytest.fixture
def tiny_scenario(tiny_scenario_file):
    return Scenario.load(str(tiny_scenario_file))
