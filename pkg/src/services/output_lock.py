"""PID lock file guarding an output directory against concurrent runs."""

import logging
import os
import platform
import subprocess
from pathlib import Path
from typing import Optional, Union

from src.core.exceptions import InputError

logger = logging.getLogger(__name__)

LOCK_NAME = ".retm_output.lock"


def _process_alive(pid: int) -> bool:
    if pid == os.getpid():
        return True
    if platform.system() == "Windows":
        result = subprocess.run(["tasklist", "/FI", f"PID eq {pid}"], capture_output=True, text=True)
        return str(pid) in result.stdout
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class OutputLock:
    """Context manager holding `<output_dir>/.retm_output.lock` for one process.

    The lock file is created exclusively. A stale lock (owner process gone or
    unreadable pid) is replaced; an empty one is still being written and counts as held.

    Raises:
        InputError: If another live process holds the lock
    """

    def __init__(self, output_dir: Union[str, Path]):
        self.output_dir = Path(output_dir)
        self.lock_file = self.output_dir / LOCK_NAME
        self._owned = False

    def _holder(self) -> Optional[int]:
        try:
            return int(self.lock_file.read_text().strip())
        except (OSError, ValueError):
            return None

    def _is_empty(self) -> bool:
        # created but not yet written by its owner
        try:
            return self.lock_file.stat().st_size == 0
        except FileNotFoundError:
            return False

    def _create(self) -> bool:
        """Create the lock file atomically; False if it already exists."""
        try:
            fd = os.open(self.lock_file, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            return False
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        return True

    def acquire(self) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if not self._create():
            if self._is_empty():
                raise InputError(
                    f"Output directory {self.output_dir} is being locked by another process. "
                    f"If this is incorrect, delete the lock file: {self.lock_file}"
                )
            pid = self._holder()
            if pid is not None and pid != os.getpid() and _process_alive(pid):
                raise InputError(
                    f"Output directory {self.output_dir} is in use by process {pid}. "
                    f"If this is incorrect, delete the lock file: {self.lock_file}"
                )
            logger.info(f"Removing stale lock file {self.lock_file}")
            try:
                self.lock_file.unlink()
            except FileNotFoundError:
                pass
            # another process may have taken over the stale lock in between
            if not self._create():
                raise InputError(
                    f"Output directory {self.output_dir} was locked by another process while "
                    f"replacing a stale lock: {self.lock_file}"
                )
        self._owned = True

    def release(self) -> None:
        if self._owned and self.lock_file.exists():
            try:
                self.lock_file.unlink()
            except OSError as e:
                logger.warning(f"Could not remove lock file {self.lock_file}: {e}")
        self._owned = False

    def __enter__(self) -> "OutputLock":
        self.acquire()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.release()
