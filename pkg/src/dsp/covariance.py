"""Per-frequency covariance statistics between microphone groups A and B.

A CovariancePair holds, for every frequency bin, the group-A auto-covariance
P_AA (Q_A x Q_A) and the B-to-A cross-covariance P_BA (Q_B x Q_A). Every ReTM
estimator is a function of these two stacks only.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from src.core.exceptions import ContractViolationError
from src.dsp.linalg import as_complex_matrix, conj_transpose
from src.dsp.stft import SpectralFrames

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-10
NEGATIVE_EIGEN_RATIO = 1e-6


def _hermitian(m: np.ndarray) -> np.ndarray:
    # (m + m^H) / 2 is Hermitian bit-for-bit: conjugation is exact and addition commutes
    return 0.5 * (m + conj_transpose(m))


@dataclass(frozen=True)
class CovariancePair:
    """Stacks p_aa (bins, Q_A, Q_A) and p_ba (bins, Q_B, Q_A)."""

    p_aa: np.ndarray
    p_ba: np.ndarray
    frame_count: int
    warnings: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        """Validate shapes and enforce Hermitian p_aa."""
        p_aa = as_complex_matrix(self.p_aa, "p_aa")
        p_ba = as_complex_matrix(self.p_ba, "p_ba")
        if p_aa.ndim != 3 or p_ba.ndim != 3:
            raise ContractViolationError("p_aa and p_ba must be stacks shaped (bins, rows, cols)")
        if p_aa.shape[1] != p_aa.shape[2]:
            raise ContractViolationError(f"p_aa must be square per bin, got {p_aa.shape}")
        if p_ba.shape[0] != p_aa.shape[0] or p_ba.shape[2] != p_aa.shape[1]:
            raise ContractViolationError(f"p_ba shape {p_ba.shape} does not match p_aa shape {p_aa.shape}")
        if self.frame_count < 1:
            raise ContractViolationError(f"frame_count must be >= 1, got {self.frame_count}")
        object.__setattr__(self, "p_aa", _hermitian(p_aa))
        object.__setattr__(self, "p_ba", p_ba)

    @property
    def bins(self) -> int:
        return self.p_aa.shape[0]

    @property
    def q_a(self) -> int:
        return self.p_aa.shape[1]

    @property
    def q_b(self) -> int:
        return self.p_ba.shape[1]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.bins, self.q_a, self.q_b)

    @classmethod
    def zeros(cls, bins: int, q_a: int, q_b: int) -> "CovariancePair":
        return cls(
            np.zeros((bins, q_a, q_a), dtype=np.complex128),
            np.zeros((bins, q_b, q_a), dtype=np.complex128),
            frame_count=1,
        )


def _check_compatible(a: CovariancePair, b: CovariancePair, op: str) -> None:
    if a.shape != b.shape:
        raise ContractViolationError(f"Cannot {op} covariance pairs of shapes {a.shape} and {b.shape}")


def estimate(
    frames_a: SpectralFrames,
    frames_b: SpectralFrames,
    frame_range: Optional[Tuple[int, Optional[int]]] = None,
) -> CovariancePair:
    """Sample covariances averaged over a frame range.

    p_aa[f] = mean_t M_A M_A^H and p_ba[f] = mean_t M_B M_A^H.

    Args:
        frames_a: Group-A frames (Q_A channels)
        frames_b: Group-B frames (Q_B channels), aligned with frames_a
        frame_range: Optional [start, stop) frame interval

    Raises:
        ContractViolationError: If the groups are misaligned or the range is empty
    """
    if not frames_a.is_aligned_with(frames_b):
        raise ContractViolationError(
            f"Misaligned groups: A has {frames_a.bins} bins x {frames_a.frames} frames, "
            f"B has {frames_b.bins} bins x {frames_b.frames} frames"
        )
    m_a = frames_a.frame_slice(frame_range).data
    m_b = frames_b.frame_slice(frame_range).data
    t = m_a.shape[2]
    p_aa = np.einsum("aft,cft->fac", m_a, np.conj(m_a)) / t
    p_ba = np.einsum("bft,aft->fba", m_b, np.conj(m_a)) / t
    return CovariancePair(p_aa, p_ba, frame_count=t)


def _negative_eigen_bins(p_aa: np.ndarray) -> np.ndarray:
    eigenvalues = np.linalg.eigvalsh(p_aa)
    trace = np.real(np.trace(p_aa, axis1=1, axis2=2))
    scale = np.maximum(np.abs(trace), PSD_TOLERANCE)
    return eigenvalues[:, 0] < -NEGATIVE_EIGEN_RATIO * scale


def subtract(full: CovariancePair, part: CovariancePair) -> CovariancePair:
    """Covariance of the sources in `full` that are not in `part`.

    Negative eigenvalues of the difference (below -1e-6 x trace) are reported in
    the result's warnings; the difference is returned unprojected.

    Raises:
        ContractViolationError: On shape mismatch
    """
    _check_compatible(full, part, "subtract")
    p_aa = full.p_aa - part.p_aa
    negative = _negative_eigen_bins(_hermitian(p_aa))
    warnings = full.warnings + part.warnings
    if negative.any():
        message = f"conditioning: {int(negative.sum())} of {full.bins} bins have negative eigenvalues after subtraction"
        logger.warning(message)
        warnings = warnings + (message,)
    return CovariancePair(
        p_aa,
        full.p_ba - part.p_ba,
        frame_count=min(full.frame_count, part.frame_count),
        warnings=warnings,
    )


def add(a: CovariancePair, b: CovariancePair) -> CovariancePair:
    """Covariance of the union of two independent source sets.

    Raises:
        ContractViolationError: On shape mismatch
    """
    _check_compatible(a, b, "add")
    return CovariancePair(
        a.p_aa + b.p_aa,
        a.p_ba + b.p_ba,
        frame_count=min(a.frame_count, b.frame_count),
        warnings=a.warnings + b.warnings,
    )


def total(parts: Sequence[CovariancePair]) -> CovariancePair:
    """Sum of several pairs."""
    if not parts:
        raise ContractViolationError("Cannot sum an empty list of covariance pairs")
    result = parts[0]
    for part in parts[1:]:
        result = add(result, part)
    return result


def is_psd(pair: CovariancePair, tolerance: float = PSD_TOLERANCE) -> bool:
    """True when every p_aa bin has eigenvalues >= -tolerance."""
    return bool(np.all(np.linalg.eigvalsh(pair.p_aa)[:, 0] >= -tolerance))


def oracle_pair(
    h_a: npt.ArrayLike,
    h_b: npt.ArrayLike,
    powers: npt.ArrayLike,
) -> CovariancePair:
    """Analytic covariances of independent sources with known transfer functions.

    P_AA = H_A diag(p) H_A^H and P_BA = H_B diag(p) H_A^H per bin.

    Args:
        h_a: Transfer functions to group A, shaped (bins, Q_A, sources)
        h_b: Transfer functions to group B, shaped (bins, Q_B, sources)
        powers: Source powers, shaped (sources,) or (bins, sources)
    """
    h_a = as_complex_matrix(h_a, "h_a")
    h_b = as_complex_matrix(h_b, "h_b")
    p = np.broadcast_to(np.asarray(powers, dtype=np.float64), h_a.shape[:1] + h_a.shape[2:])
    weighted = h_a * p[:, np.newaxis, :]
    return CovariancePair(
        weighted @ conj_transpose(h_a),
        (h_b * p[:, np.newaxis, :]) @ conj_transpose(h_a),
        frame_count=1,
    )
