"""Configuration management."""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv


class Config:
    """Application configuration manager."""

    DEFAULT_WINDOW_LEN = 8192
    DEFAULT_OUTPUT_DIR = "output"

    def __init__(self, env_file: Optional[str] = None):
        """Initialize configuration.

        Args:
            env_file: Path to .env file (default: .env in project root)
        """
        if env_file is None:
            env_file = Path(__file__).parent.parent.parent / ".env"

        load_dotenv(env_file)
        self.env_file = env_file

    def get_worker_count(self) -> int:
        """Get the worker count for parallel stages.

        Returns:
            Value of RETM_WORKERS, or the CPU count when unset

        Raises:
            ValueError: If RETM_WORKERS is not a positive integer
        """
        raw = os.getenv("RETM_WORKERS")
        if not raw:
            return os.cpu_count() or 1
        try:
            workers = int(raw)
        except ValueError as e:
            raise ValueError(f"RETM_WORKERS must be an integer, got '{raw}'") from e
        if workers < 1:
            raise ValueError(f"RETM_WORKERS must be >= 1, got {workers}")
        return workers

    def get_pinv_tolerance(self) -> Optional[float]:
        """Get the relative pseudoinverse tolerance, None for the rank-revealing default."""
        raw = os.getenv("RETM_PINV_TOL")
        if not raw:
            return None
        tol = float(raw)
        if tol < 0:
            raise ValueError(f"RETM_PINV_TOL must be non-negative, got {tol}")
        return tol

    def get_stft_config(self) -> dict:
        """Get STFT window and hop.

        Returns:
            Dictionary with window_len and hop
        """
        window_len = int(os.getenv("RETM_WINDOW_LEN", str(self.DEFAULT_WINDOW_LEN)))
        hop = int(os.getenv("RETM_HOP", str(window_len // 2)))
        return {"window_len": window_len, "hop": hop}

    def get_output_dir(self) -> Path:
        """Get the default output directory."""
        return Path(os.getenv("RETM_OUTPUT_DIR", self.DEFAULT_OUTPUT_DIR))

    def get_log_level(self) -> str:
        """Get the logging level name."""
        return os.getenv("RETM_LOG_LEVEL", "INFO").upper()
