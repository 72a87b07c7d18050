"""WAV file adapter backed by soundfile."""

import logging
from fractions import Fraction
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from src.core.audio_model import AudioBuffer
from src.core.exceptions import ContractViolationError, InputError
from src.core.interfaces import AudioAdapter

logger = logging.getLogger(__name__)

READ_SUBTYPES = {"PCM_16", "PCM_24", "FLOAT"}
WRITE_SUBTYPES = {"pcm16": "PCM_16", "pcm24": "PCM_24", "float32": "FLOAT"}

# Kaiser beta for roughly 80 dB of stopband attenuation
RESAMPLE_KAISER_BETA = 0.1102 * (80.0 - 8.7)


class WavAdapter(AudioAdapter):
    """Adapter for RIFF/WAVE files (PCM16, PCM24, float32)."""

    def read(self, path: Union[str, Path]) -> AudioBuffer:
        """Read a WAV file into double precision.

        Args:
            path: WAV file to read

        Returns:
            AudioBuffer with the file's channel count and rate

        Raises:
            InputError: If the file is missing, truncated or uses another codec
        """
        path = Path(path)
        if not path.exists():
            raise InputError(f"Audio file not found: {path}")
        try:
            info = sf.info(str(path))
        except (RuntimeError, sf.LibsndfileError) as e:
            raise InputError(f"Cannot open audio file {path}: {e}") from e
        if info.format != "WAV" or info.subtype not in READ_SUBTYPES:
            raise InputError(
                f"Unsupported codec {info.format}/{info.subtype} in {path}; "
                f"expected WAV with one of {sorted(READ_SUBTYPES)}"
            )
        try:
            data, rate = sf.read(str(path), dtype="float64", always_2d=True)
        except (RuntimeError, sf.LibsndfileError) as e:
            raise InputError(f"Truncated or corrupt audio file {path}: {e}") from e
        return AudioBuffer(data.T, int(rate))

    def write(self, path: Union[str, Path], buffer: AudioBuffer, fmt: str = "float32") -> None:
        """Write a buffer as WAV.

        Args:
            path: Destination file (parent directories are created)
            buffer: Audio to write
            fmt: One of pcm16, pcm24, float32

        Raises:
            ContractViolationError: For an unknown format
            OSError: If the file cannot be written (message names the path)
        """
        if fmt not in WRITE_SUBTYPES:
            raise ContractViolationError(f"Unknown WAV format '{fmt}', expected one of {sorted(WRITE_SUBTYPES)}")
        path = Path(path)
        data = buffer.samples.T
        if fmt != "float32":
            data = np.clip(data, -1.0, 1.0)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            sf.write(str(path), data, buffer.sample_rate, subtype=WRITE_SUBTYPES[fmt], format="WAV")
        except (RuntimeError, sf.LibsndfileError, OSError) as e:
            raise OSError(f"Failed to write {path}: {e}") from e


_default_adapter = WavAdapter()


def read_wav(path: Union[str, Path]) -> AudioBuffer:
    """Read a WAV file with the default adapter."""
    return _default_adapter.read(path)


def write_wav(path: Union[str, Path], buffer: AudioBuffer, fmt: str = "float32") -> None:
    """Write a WAV file with the default adapter."""
    _default_adapter.write(path, buffer, fmt)


def resample(buffer: AudioBuffer, sample_rate: int) -> AudioBuffer:
    """Polyphase windowed-sinc resampling to a new rate.

    Args:
        buffer: Audio to resample
        sample_rate: Target rate in Hz

    Returns:
        Resampled buffer (the input itself when the rates already match)
    """
    if sample_rate == buffer.sample_rate:
        return buffer
    ratio = Fraction(sample_rate, buffer.sample_rate)
    logger.info(f"Resampling {buffer.sample_rate} Hz -> {sample_rate} Hz")
    samples = resample_poly(
        buffer.samples, ratio.numerator, ratio.denominator, axis=-1,
        window=("kaiser", RESAMPLE_KAISER_BETA),
    )
    return AudioBuffer(samples, sample_rate)
