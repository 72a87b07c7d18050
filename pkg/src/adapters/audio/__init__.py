"""Audio file adapters."""

from .wav_adapter import WavAdapter, read_wav, resample, write_wav

__all__ = ["WavAdapter", "read_wav", "write_wav", "resample"]
