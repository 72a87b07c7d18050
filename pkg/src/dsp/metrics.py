"""BSS-eval style separation metrics (SIR / SDR).

An estimate is split into orthogonal components by least-squares projection
onto delayed copies of the clean references:

    estimate = s_target + e_interf + e_artif

All components live in the zero-padded length N + filter_len - 1.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.signal import fftconvolve

from src.core.exceptions import ContractViolationError, UndefinedMetricError

logger = logging.getLogger(__name__)

DEFAULT_FILTER_LEN = 512
DB_CAP = 100.0
REGULARIZATION = 1e-8


@dataclass(frozen=True)
class Decomposition:
    target: int
    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray
    regularized: bool = False

    @property
    def estimate(self) -> np.ndarray:
        return self.s_target + self.e_interf + self.e_artif


@dataclass(frozen=True)
class EvalResult:
    """Separation quality of one speaker, in dB."""

    speaker: int
    sir_db: float
    sdr_db: float
    sir_improvement_db: float = 0.0
    sdr_improvement_db: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _gram(spectra: np.ndarray, nfft: int, filter_len: int) -> np.ndarray:
    """Autocorrelation matrix of all delayed references (block Toeplitz)."""
    n_src = spectra.shape[0]
    gram = np.zeros((n_src * filter_len, n_src * filter_len))
    for i in range(n_src):
        for j in range(i, n_src):
            corr = np.fft.irfft(spectra[i] * np.conj(spectra[j]), n=nfft)
            block = scipy.linalg.toeplitz(np.hstack((corr[0], corr[-1:-filter_len:-1])), corr[:filter_len])
            gram[i * filter_len:(i + 1) * filter_len, j * filter_len:(j + 1) * filter_len] = block
            gram[j * filter_len:(j + 1) * filter_len, i * filter_len:(i + 1) * filter_len] = block.T
    return gram


def _project(references: np.ndarray, estimate: np.ndarray, filter_len: int) -> Tuple[np.ndarray, bool]:
    """Least-squares projection of the estimate onto delayed references.

    Returns:
        Projection of length N + filter_len - 1 and whether the Gram system
        needed diagonal loading
    """
    n_src, n = references.shape
    nfft = int(2 ** np.ceil(np.log2(n + filter_len - 1)))
    spectra = np.fft.rfft(references, n=nfft, axis=1)
    est_spectrum = np.fft.rfft(estimate, n=nfft)

    gram = _gram(spectra, nfft, filter_len)
    rhs = np.empty(n_src * filter_len)
    for i in range(n_src):
        corr = np.fft.irfft(spectra[i] * np.conj(est_spectrum), n=nfft)
        rhs[i * filter_len:(i + 1) * filter_len] = np.hstack((corr[0], corr[-1:-filter_len:-1]))

    regularized = False
    try:
        coeffs = scipy.linalg.solve(gram, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, ValueError):
        regularized = True
        loading = REGULARIZATION * max(np.trace(gram) / gram.shape[0], np.finfo(np.float64).tiny)
        logger.warning(f"Singular projection system ({gram.shape[0]} unknowns), diagonal loading {loading:.3e}")
        coeffs = scipy.linalg.solve(gram + loading * np.eye(gram.shape[0]), rhs, assume_a="pos")

    coeffs = coeffs.reshape(n_src, filter_len)
    projection = np.zeros(n + filter_len - 1)
    for i in range(n_src):
        projection += fftconvolve(coeffs[i], references[i])[: n + filter_len - 1]
    return projection, regularized


def decompose(
    estimate: npt.ArrayLike,
    references: npt.ArrayLike,
    target: int,
    filter_len: int = DEFAULT_FILTER_LEN,
) -> Decomposition:
    """Split an estimate into target, interference and artifact components.

    Args:
        estimate: Mono estimate of N samples
        references: Clean source images at the scored microphone, (sources, N)
        target: Row of `references` holding the target
        filter_len: Number of delayed copies (distortion filter taps)

    Raises:
        ContractViolationError: On length or index mismatch
        UndefinedMetricError: If the estimate or the target reference is silent
    """
    est = np.asarray(estimate, dtype=np.float64)
    refs = np.atleast_2d(np.asarray(references, dtype=np.float64))
    if est.ndim != 1:
        raise ContractViolationError(f"Estimate must be mono, got shape {est.shape}")
    if refs.shape[1] != est.size:
        raise ContractViolationError(f"Estimate has {est.size} samples, references have {refs.shape[1]}")
    if not 0 <= target < refs.shape[0]:
        raise ContractViolationError(f"Target {target} out of range for {refs.shape[0]} references")
    if filter_len < 1:
        raise ContractViolationError(f"filter_len must be >= 1, got {filter_len}")
    if not np.any(est):
        raise UndefinedMetricError("Estimate is silent; SIR/SDR are undefined")
    if not np.any(refs[target]):
        raise UndefinedMetricError(f"Target reference {target} is silent")

    # silent interferers add nothing to the span and make the Gram singular
    active = [i for i in range(refs.shape[0]) if i == target or np.any(refs[i])]
    s_target, reg_t = _project(refs[[target]], est, filter_len)
    s_all, reg_all = _project(refs[active], est, filter_len)
    padded = np.concatenate([est, np.zeros(filter_len - 1)])
    return Decomposition(
        target=target,
        s_target=s_target,
        e_interf=s_all - s_target,
        e_artif=padded - s_all,
        regularized=reg_t or reg_all,
    )


def _capped_db(num: float, den: float) -> float:
    if den <= 0.0:
        return DB_CAP
    if num <= 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(num / den), -DB_CAP, DB_CAP))


def sir_sdr(
    decomposition: Decomposition,
    baseline: Optional[EvalResult] = None,
    speaker: Optional[int] = None,
) -> EvalResult:
    """SIR and SDR of a decomposition, with improvements over a baseline.

    Args:
        decomposition: Result of decompose()
        baseline: Metrics of the unprocessed mixture; improvements are 0 without it
        speaker: Speaker id stored on the result (defaults to the target index)
    """
    target_energy = float(np.sum(decomposition.s_target ** 2))
    interf_energy = float(np.sum(decomposition.e_interf ** 2))
    distortion_energy = float(np.sum((decomposition.e_interf + decomposition.e_artif) ** 2))
    sir = _capped_db(target_energy, interf_energy)
    sdr = _capped_db(target_energy, distortion_energy)
    return EvalResult(
        speaker=decomposition.target if speaker is None else speaker,
        sir_db=sir,
        sdr_db=sdr,
        sir_improvement_db=0.0 if baseline is None else sir - baseline.sir_db,
        sdr_improvement_db=0.0 if baseline is None else sdr - baseline.sdr_db,
    )


def evaluate(
    estimate: npt.ArrayLike,
    references: npt.ArrayLike,
    target: int,
    baseline: Optional[EvalResult] = None,
    filter_len: int = DEFAULT_FILTER_LEN,
    speaker: Optional[int] = None,
) -> EvalResult:
    """decompose() followed by sir_sdr()."""
    return sir_sdr(decompose(estimate, references, target, filter_len), baseline, speaker)


def snr_db(signal: npt.ArrayLike, noise: npt.ArrayLike) -> float:
    """Energy ratio of two signals in dB, uncapped."""
    num = float(np.sum(np.asarray(signal, dtype=np.float64) ** 2))
    den = float(np.sum(np.asarray(noise, dtype=np.float64) ** 2))
    if num <= 0.0 or den <= 0.0:
        raise UndefinedMetricError("SNR is undefined for silent signal or noise")
    return 10.0 * np.log10(num / den)
