"""Relative transfer matrix (ReTM) estimators.

Every estimator reduces to one computation per frequency bin:

    R = P_AA @ pinv(P_BA)

applied to a covariance pair that describes the wanted source subset. The
estimators differ only in how that pair is assembled from recorded statistics.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from src.core.exceptions import ContractViolationError, NumericalError
from src.dsp import covariance
from src.dsp.covariance import CovariancePair
from src.dsp.linalg import as_complex_matrix, frobenius_relative, pseudoinverse

logger = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.5


@dataclass(frozen=True)
class Retm:
    """Per-bin ReTM stack shaped (bins, Q_A, Q_B).

    Attributes:
        matrices: ReTM per frequency bin
        failed_bins: Boolean mask of bins where the pseudoinverse failed;
            those bins hold zeros and must be treated as unknown
        provenance: Free-form record of how the estimate was produced
        warnings: Conditioning warnings inherited from the covariances
    """

    matrices: np.ndarray
    failed_bins: Optional[np.ndarray] = None
    provenance: Dict[str, Any] = field(default_factory=dict)
    warnings: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        """Validate shape and the failed-bin mask."""
        matrices = as_complex_matrix(self.matrices, "ReTM")
        if matrices.ndim != 3:
            raise ContractViolationError(f"ReTM must be shaped (bins, Q_A, Q_B), got {matrices.shape}")
        if self.failed_bins is None:
            failed = np.zeros(matrices.shape[0], dtype=bool)
        else:
            failed = np.asarray(self.failed_bins, dtype=bool)
        if failed.shape != (matrices.shape[0],):
            raise ContractViolationError(
                f"failed_bins mask shape {failed.shape} does not match {matrices.shape[0]} bins"
            )
        object.__setattr__(self, "matrices", matrices)
        object.__setattr__(self, "failed_bins", failed)

    @property
    def bins(self) -> int:
        return self.matrices.shape[0]

    @property
    def q_a(self) -> int:
        return self.matrices.shape[1]

    @property
    def q_b(self) -> int:
        return self.matrices.shape[2]

    @property
    def failed_count(self) -> int:
        return int(self.failed_bins.sum())

    def usable(self) -> np.ndarray:
        """Matrices with failed bins replaced by zeros (mixture passes through there)."""
        return np.where(self.failed_bins[:, np.newaxis, np.newaxis], 0.0, self.matrices)

    @classmethod
    def zeros(cls, bins: int, q_a: int, q_b: int) -> "Retm":
        return cls(np.zeros((bins, q_a, q_b), dtype=np.complex128), provenance={"method": "zero"})


def _binwise_pinv(p_ba: np.ndarray, tol: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Pseudoinverse per bin, isolating bins whose SVD fails."""
    failed = np.zeros(p_ba.shape[0], dtype=bool)
    try:
        inverse = pseudoinverse(p_ba, tol)
    except NumericalError:
        logger.debug("Batched SVD failed, retrying bin by bin")
        inverse = np.zeros(p_ba.shape[:1] + p_ba.shape[:0:-1], dtype=np.complex128)
        for f in range(p_ba.shape[0]):
            try:
                inverse[f] = pseudoinverse(p_ba[f], tol, context=f"bin {f}")
            except NumericalError as e:
                logger.warning(str(e))
                failed[f] = True
    failed |= ~np.all(np.isfinite(inverse), axis=(1, 2))
    return inverse, failed


def _from_pair(pair: CovariancePair, tol: Optional[float], provenance: Dict[str, Any]) -> Retm:
    inverse, failed = _binwise_pinv(pair.p_ba, tol)
    inverse[failed] = 0.0
    matrices = pair.p_aa @ inverse
    if failed.any():
        logger.warning(f"ReTM estimation failed at {int(failed.sum())} of {pair.bins} bins")
    if failed.mean() > MAX_FAILED_FRACTION:
        raise NumericalError(
            f"ReTM estimation failed at {int(failed.sum())} of {pair.bins} bins "
            f"(more than {MAX_FAILED_FRACTION:.0%})"
        )
    record = dict(provenance)
    record.setdefault("frame_count", pair.frame_count)
    if tol is not None:
        record.setdefault("pinv_tolerance", tol)
    return Retm(matrices, failed_bins=failed, provenance=record, warnings=pair.warnings)


def estimate_direct(
    cov: CovariancePair,
    tol: Optional[float] = None,
    provenance: Optional[Dict[str, Any]] = None,
) -> Retm:
    """R = P_AA pinv(P_BA), all sources present in the covariances.

    Args:
        cov: Covariances of the modelled sources
        tol: Relative pseudoinverse tolerance (None for the default)
        provenance: Extra fields stored on the result

    Raises:
        NumericalError: If more than half of the bins fail
    """
    return _from_pair(cov, tol, {"method": "direct", **(provenance or {})})


def estimate_by_subtraction(
    full: CovariancePair,
    noise: CovariancePair,
    tol: Optional[float] = None,
    provenance: Optional[Dict[str, Any]] = None,
) -> Retm:
    """ReTM of the sources in `full` but not in `noise`.

    The difference may lose positive semidefiniteness under estimation noise;
    that is recorded as a warning and the raw difference is used.
    """
    remaining = covariance.subtract(full, noise)
    return _from_pair(remaining, tol, {"method": "subtraction", **(provenance or {})})


def estimate_noise_retm(
    noise: CovariancePair,
    tol: Optional[float] = None,
    provenance: Optional[Dict[str, Any]] = None,
) -> Retm:
    """ReTM of the noise sources from noise-only statistics."""
    return _from_pair(noise, tol, {"method": "noise", **(provenance or {})})


def estimate_subset(
    parts: Sequence[CovariancePair],
    tol: Optional[float] = None,
    provenance: Optional[Dict[str, Any]] = None,
) -> Retm:
    """ReTM of a union of independent source subsets.

    Args:
        parts: One covariance pair per subset, all of the same shape

    Raises:
        ContractViolationError: If parts is empty or shapes differ
    """
    combined = covariance.total(list(parts))
    return _from_pair(combined, tol, {"method": "subset", "parts": len(parts), **(provenance or {})})


def undesired_covariance(
    noise_only: CovariancePair,
    noise_plus: Sequence[CovariancePair],
    target: int,
) -> CovariancePair:
    """Covariance of every source except speaker `target`.

    Each speaker's own covariance is recovered as noise_plus[k] - noise_only;
    the other speakers are summed and the noise covariance is added back once.

    Raises:
        ContractViolationError: If target is out of range
    """
    if not 0 <= target < len(noise_plus):
        raise ContractViolationError(
            f"Target speaker {target} out of range for {len(noise_plus)} speakers"
        )
    result = noise_only
    for k, pair in enumerate(noise_plus):
        if k != target:
            result = covariance.add(result, covariance.subtract(pair, noise_only))
    return result


def estimate_undesired_for_speaker(
    noise_only: CovariancePair,
    noise_plus: Sequence[CovariancePair],
    target: int,
    tol: Optional[float] = None,
    provenance: Optional[Dict[str, Any]] = None,
) -> Retm:
    """ReTM of all sources except speaker `target`, from calibration statistics.

    Args:
        noise_only: Covariances of a noise-only segment
        noise_plus: Per speaker, covariances of a segment with the noise and that speaker only
        target: 0-based speaker index to exclude
        tol: Relative pseudoinverse tolerance

    Raises:
        ContractViolationError: If target is out of range
        NumericalError: If more than half of the bins fail
    """
    pair = undesired_covariance(noise_only, noise_plus, target)
    record = {"method": "training", "target": target, "speakers": len(noise_plus), **(provenance or {})}
    return _from_pair(pair, tol, record)


def check_nonadditivity(r_s: Retm, r_n: Retm, r_total: Retm) -> np.ndarray:
    """Per-bin ||(R_S + R_N) - R_total||_F / ||R_total||_F.

    ReTMs of disjoint source sets do not add up to the ReTM of their union, so
    this is generically far from zero.
    """
    if not r_s.matrices.shape == r_n.matrices.shape == r_total.matrices.shape:
        raise ContractViolationError(
            f"ReTM shapes differ: {r_s.matrices.shape}, {r_n.matrices.shape}, {r_total.matrices.shape}"
        )
    return frobenius_relative(r_s.matrices + r_n.matrices - r_total.matrices, r_total.matrices)


def oracle_retm(h_a: npt.ArrayLike, h_b: npt.ArrayLike, tol: Optional[float] = None) -> Retm:
    """Ground-truth ReTM H_A pinv(H_B) from known transfer functions.

    Args:
        h_a: Transfer functions shaped (bins, Q_A, sources)
        h_b: Transfer functions shaped (bins, Q_B, sources)
    """
    h_a = as_complex_matrix(h_a, "h_a")
    h_b = as_complex_matrix(h_b, "h_b")
    if h_a.shape[0] != h_b.shape[0] or h_a.shape[-1] != h_b.shape[-1]:
        raise ContractViolationError(f"Transfer function shapes differ: {h_a.shape} vs {h_b.shape}")
    return Retm(h_a @ pseudoinverse(h_b, tol), provenance={"method": "oracle"})


def relation_residual(retm: Retm, h_a: npt.ArrayLike, h_b: npt.ArrayLike) -> np.ndarray:
    """Per-bin ||H_A - R H_B||_F / ||H_A||_F for known transfer functions."""
    h_a = as_complex_matrix(h_a, "h_a")
    h_b = as_complex_matrix(h_b, "h_b")
    return frobenius_relative(h_a - retm.matrices @ h_b, h_a)
