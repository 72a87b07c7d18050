"""Core interfaces following Dependency Inversion Principle."""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Protocol, Union

import pandas as pd

from src.core.audio_model import AudioBuffer


class AudioAdapter(ABC):
    """Abstract interface for audio file adapters."""

    @abstractmethod
    def read(self, path: Union[str, Path]) -> AudioBuffer:
        """Read an audio file.

        Args:
            path: File to read

        Returns:
            AudioBuffer in double precision
        """
        pass

    @abstractmethod
    def write(self, path: Union[str, Path], buffer: AudioBuffer, fmt: str = "float32") -> None:
        """Write an audio buffer.

        Args:
            path: Destination file
            buffer: Audio to write
            fmt: Sample format name
        """
        pass


class ReportExporter(Protocol):
    """Protocol for report exporters."""

    def export(self, df: pd.DataFrame, output_path: str) -> str:
        """Export DataFrame to file.

        Args:
            df: pandas DataFrame to export
            output_path: Output file path

        Returns:
            Path to created file
        """
        ...
