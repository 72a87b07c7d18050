"""Audio buffer model."""

from dataclasses import dataclass

import numpy as np

from src.core.exceptions import ContractViolationError


@dataclass(frozen=True)
class AudioBuffer:
    """Multichannel audio in double precision, shaped (channels, samples)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        """Normalize layout and validate contents."""
        data = np.asarray(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1:
            raise ContractViolationError(
                f"AudioBuffer needs shape (channels, samples), got {np.shape(self.samples)}"
            )
        if not np.all(np.isfinite(data)):
            raise ContractViolationError("AudioBuffer samples must be finite")
        if self.sample_rate <= 0:
            raise ContractViolationError(f"Sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", data)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def channel(self, index: int) -> "AudioBuffer":
        """Return a single channel as a mono buffer."""
        return AudioBuffer(self.samples[index], self.sample_rate)

    def to_mono(self) -> "AudioBuffer":
        """Average all channels into one."""
        return AudioBuffer(self.samples.mean(axis=0), self.sample_rate)
