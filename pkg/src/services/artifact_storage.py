"""Binary persistence of covariance pairs and ReTMs between sessions.

File layout (all little-endian):

    magic         8 bytes   b"RETMCOV\\0" or b"RETMMAT\\0"
    version       uint16
    dims          3 x uint32   bins, Q_A, Q_B
    metadata_len  uint32
    metadata      UTF-8 JSON
    payload       complex128 arrays (ReTMs: followed by a uint8 failed-bin mask)
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.core.exceptions import InputError
from src.dsp.covariance import CovariancePair
from src.dsp.retm import Retm

logger = logging.getLogger(__name__)

COVARIANCE_MAGIC = b"RETMCOV\x00"
RETM_MAGIC = b"RETMMAT\x00"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<8sH3I")
_LENGTH = struct.Struct("<I")
_COMPLEX = np.dtype("<c16")


def _encode(magic: bytes, dims: Tuple[int, int, int], metadata: Dict[str, Any], arrays) -> bytes:
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts = [_HEADER.pack(magic, FORMAT_VERSION, *dims), _LENGTH.pack(len(meta)), meta]
    parts.extend(np.ascontiguousarray(a).tobytes() for a in arrays)
    return b"".join(parts)


def _decode_header(blob: bytes, magic: bytes, path: Path) -> Tuple[Tuple[int, int, int], Dict[str, Any], int]:
    if len(blob) < _HEADER.size + _LENGTH.size:
        raise InputError(f"Artifact {path} is truncated")
    found, version, bins, q_a, q_b = _HEADER.unpack_from(blob)
    if found != magic:
        raise InputError(f"Artifact {path} has magic {found!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise InputError(f"Artifact {path} has format version {version}, expected {FORMAT_VERSION}")
    (meta_len,) = _LENGTH.unpack_from(blob, _HEADER.size)
    offset = _HEADER.size + _LENGTH.size
    try:
        metadata = json.loads(blob[offset:offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"Artifact {path} has corrupt metadata") from e
    return (bins, q_a, q_b), metadata, offset + meta_len


def _read_array(blob: bytes, offset: int, dtype: np.dtype, shape, path: Path) -> Tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    end = offset + count * dtype.itemsize
    if end > len(blob):
        raise InputError(f"Artifact {path} is truncated")
    return np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape).copy(), end


class ArtifactStorage:
    """Directory of named covariance and ReTM artifacts."""

    COVARIANCE_SUFFIX = ".cov"
    RETM_SUFFIX = ".retm"

    def __init__(self, root: Union[str, Path]):
        """Initialize artifact storage.

        Args:
            root: Directory holding the artifacts (created on first save)
        """
        self.root = Path(root)

    def covariance_path(self, name: str) -> Path:
        return self.root / f"{name}{self.COVARIANCE_SUFFIX}"

    def retm_path(self, name: str) -> Path:
        return self.root / f"{name}{self.RETM_SUFFIX}"

    def _write(self, path: Path, blob: bytes) -> Path:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(blob)
        except OSError as e:
            raise OSError(f"Could not write artifact {path}: {e}") from e
        logger.debug(f"Wrote {len(blob)} bytes to {path}")
        return path

    def _read(self, path: Path) -> bytes:
        try:
            return path.read_bytes()
        except FileNotFoundError as e:
            raise InputError(f"Artifact not found: {path}") from e
        except OSError as e:
            raise InputError(f"Could not read artifact {path}: {e}") from e

    def save_covariance(self, name: str, pair: CovariancePair, metadata: Optional[Dict[str, Any]] = None) -> Path:
        """Store a covariance pair under `name`.

        Returns:
            Path of the written file
        """
        meta = {"frame_count": pair.frame_count, "warnings": list(pair.warnings), **(metadata or {})}
        blob = _encode(COVARIANCE_MAGIC, (pair.bins, pair.q_a, pair.q_b), meta, [
            pair.p_aa.astype(_COMPLEX), pair.p_ba.astype(_COMPLEX),
        ])
        return self._write(self.covariance_path(name), blob)

    def load_covariance(self, name: str) -> CovariancePair:
        """Load a covariance pair.

        Raises:
            InputError: If the file is missing or malformed
        """
        path = self.covariance_path(name)
        blob = self._read(path)
        (bins, q_a, q_b), meta, offset = _decode_header(blob, COVARIANCE_MAGIC, path)
        p_aa, offset = _read_array(blob, offset, _COMPLEX, (bins, q_a, q_a), path)
        p_ba, _ = _read_array(blob, offset, _COMPLEX, (bins, q_b, q_a), path)
        return CovariancePair(p_aa, p_ba, frame_count=int(meta["frame_count"]), warnings=tuple(meta.get("warnings", ())))

    def save_retm(self, name: str, retm: Retm) -> Path:
        """Store a ReTM with its provenance and failed-bin mask."""
        meta = {"provenance": retm.provenance, "warnings": list(retm.warnings)}
        blob = _encode(RETM_MAGIC, (retm.bins, retm.q_a, retm.q_b), meta, [
            retm.matrices.astype(_COMPLEX), retm.failed_bins.astype(np.uint8),
        ])
        return self._write(self.retm_path(name), blob)

    def load_retm(self, name: str) -> Retm:
        """Load a ReTM.

        Raises:
            InputError: If the file is missing or malformed
        """
        path = self.retm_path(name)
        blob = self._read(path)
        (bins, q_a, q_b), meta, offset = _decode_header(blob, RETM_MAGIC, path)
        matrices, offset = _read_array(blob, offset, _COMPLEX, (bins, q_a, q_b), path)
        failed, _ = _read_array(blob, offset, np.dtype(np.uint8), (bins,), path)
        return Retm(
            matrices,
            failed_bins=failed.astype(bool),
            provenance=meta.get("provenance", {}),
            warnings=tuple(meta.get("warnings", ())),
        )

    def has_retm(self, name: str) -> bool:
        return self.retm_path(name).exists()

    def has_covariance(self, name: str) -> bool:
        return self.covariance_path(name).exists()
