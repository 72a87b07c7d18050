"""Short-time Fourier transform with a periodic square-root Hann window.

Analysis and synthesis use the same window, so the effective overlap-add
window is a periodic Hann, which is COLA at hop = window_len / 2 (and at
any hop that divides window_len / 2).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.signal import check_COLA, get_window

from src.core.exceptions import ContractViolationError

logger = logging.getLogger(__name__)


def sqrt_hann(window_len: int) -> np.ndarray:
    """Periodic square-root Hann window."""
    return np.sqrt(get_window("hann", window_len, fftbins=True))


def _validate_window(window_len: int, hop: int) -> None:
    if window_len < 2 or window_len & (window_len - 1):
        raise ContractViolationError(f"window_len must be a power of two, got {window_len}")
    if hop < 1 or hop > window_len:
        raise ContractViolationError(f"hop must be in [1, {window_len}], got {hop}")
    if window_len % hop:
        raise ContractViolationError(f"hop {hop} must divide window_len {window_len}")


def _ola_gain(window_len: int, hop: int) -> float:
    """Constant value of the overlapped squared window.

    Raises:
        ContractViolationError: If the window/hop pair is not COLA
    """
    squared = sqrt_hann(window_len) ** 2
    if not check_COLA(squared, window_len, window_len - hop):
        raise ContractViolationError(
            f"sqrt-Hann window of {window_len} samples with hop {hop} is not COLA"
        )
    return float(squared.sum() / hop)


@dataclass(frozen=True)
class SpectralFrames:
    """STFT of a multichannel recording, data indexed (channel, bin, frame)."""

    data: np.ndarray
    sample_rate: int
    window_len: int
    hop: int

    def __post_init__(self):
        """Validate shape against the window."""
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 3:
            raise ContractViolationError(f"SpectralFrames data must be 3-D, got shape {data.shape}")
        if data.shape[1] != self.window_len // 2 + 1:
            raise ContractViolationError(
                f"Expected {self.window_len // 2 + 1} bins for window {self.window_len}, got {data.shape[1]}"
            )
        _validate_window(self.window_len, self.hop)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def bins(self) -> int:
        return self.data.shape[1]

    @property
    def frames(self) -> int:
        return self.data.shape[2]

    def select(self, channels: Sequence[int]) -> "SpectralFrames":
        """Frames of a channel subset, e.g. one microphone group."""
        return self._with_data(self.data[list(channels)])

    def frame_slice(self, frame_range: Optional[Tuple[int, Optional[int]]]) -> "SpectralFrames":
        """Frames restricted to [start, stop).

        Raises:
            ContractViolationError: If the range is empty or reaches outside the frames
        """
        if frame_range is None:
            return self
        start, stop = frame_range
        if start < 0 or (stop is not None and stop > self.frames):
            raise ContractViolationError(f"Frame range {frame_range} is outside 0..{self.frames}")
        sliced = self.data[:, :, start:stop]
        if sliced.shape[2] == 0:
            raise ContractViolationError(f"Frame range {frame_range} is empty ({self.frames} frames)")
        return self._with_data(sliced)

    def is_aligned_with(self, other: "SpectralFrames") -> bool:
        return (
            self.bins == other.bins
            and self.frames == other.frames
            and self.hop == other.hop
            and self.sample_rate == other.sample_rate
        )

    def _with_data(self, data: np.ndarray) -> "SpectralFrames":
        return SpectralFrames(data, self.sample_rate, self.window_len, self.hop)


def analyze(
    audio: npt.ArrayLike,
    window_len: int,
    hop: Optional[int] = None,
    sample_rate: int = 16000,
) -> SpectralFrames:
    """Forward STFT of multichannel audio.

    Args:
        audio: Samples shaped (channels, samples) or (samples,)
        window_len: Window length in samples (power of two)
        hop: Hop size in samples (default window_len / 2)
        sample_rate: Sampling rate stored with the frames

    Returns:
        SpectralFrames with floor((len - window_len) / hop) + 1 frames

    Raises:
        ContractViolationError: If the audio is shorter than one window
    """
    hop = window_len // 2 if hop is None else hop
    _validate_window(window_len, hop)
    x = np.atleast_2d(np.asarray(audio, dtype=np.float64))
    if x.shape[1] < window_len:
        raise ContractViolationError(
            f"Audio of {x.shape[1]} samples is shorter than one window ({window_len})"
        )
    window = sqrt_hann(window_len)
    n_frames = (x.shape[1] - window_len) // hop + 1
    data = np.empty((x.shape[0], window_len // 2 + 1, n_frames), dtype=np.complex128)
    for c in range(x.shape[0]):
        segments = np.lib.stride_tricks.sliding_window_view(x[c], window_len)[::hop][:n_frames]
        data[c] = np.fft.rfft(segments * window, axis=-1).T
    return SpectralFrames(data, sample_rate, window_len, hop)


def synthesize(frames: SpectralFrames) -> np.ndarray:
    """Inverse STFT by weighted overlap-add.

    Returns:
        Samples shaped (channels, (frames - 1) * hop + window_len)

    Raises:
        ContractViolationError: If the window/hop pair is not COLA
    """
    n, hop = frames.window_len, frames.hop
    gain = _ola_gain(n, hop)
    window = sqrt_hann(n)
    out = np.zeros((frames.channels, (frames.frames - 1) * hop + n))
    for c in range(frames.channels):
        segments = np.fft.irfft(frames.data[c].T, n=n, axis=-1) * window
        for t in range(frames.frames):
            out[c, t * hop:t * hop + n] += segments[t]
    return out / gain


def interior(num_samples: int, window_len: int) -> slice:
    """Sample range excluding the first and last window (edge frames)."""
    if num_samples <= 2 * window_len:
        raise ContractViolationError(
            f"{num_samples} samples leave no interior after excluding two windows of {window_len}"
        )
    return slice(window_len, num_samples - window_len)
