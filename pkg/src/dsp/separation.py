"""Speaker extraction by cancelling the undesired-source ReTM prediction.

For target speaker l with undesired-source ReTM R (every source except l):

    S_l(f, t) = M_A(f, t) - R(f) M_B(f, t)

which leaves Q_A filtered copies of the target at the group-A microphones.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from src.core.exceptions import ContractViolationError
from src.dsp.retm import Retm
from src.dsp.stft import SpectralFrames, synthesize

logger = logging.getLogger(__name__)

RECONSTRUCT_MODES = ("reference", "average")


@dataclass(frozen=True)
class SeparationOutput:
    """Extracted target in the STFT domain.

    Attributes:
        frames: Estimated target frames, same shape as M_A (Q_A, bins, frames)
        cancellation_db: Per bin, output energy over group-A mixture energy (dB)
        failed_bins: Bins where the ReTM was unknown and M_A was passed through
    """

    frames: SpectralFrames
    cancellation_db: np.ndarray
    failed_bins: np.ndarray


def _energy_ratio_db(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    tiny = np.finfo(np.float64).tiny
    return 10.0 * np.log10(np.maximum(num, tiny) / np.maximum(den, tiny))


def extract(frames_a: SpectralFrames, frames_b: SpectralFrames, undesired: Retm) -> SeparationOutput:
    """Subtract the undesired-source prediction from the group-A frames.

    Args:
        frames_a: Group-A mixture frames (Q_A, bins, frames)
        frames_b: Group-B mixture frames (Q_B, bins, frames)
        undesired: ReTM of all sources except the target

    Raises:
        ContractViolationError: If frames are misaligned or the ReTM shape differs
    """
    if not frames_a.is_aligned_with(frames_b):
        raise ContractViolationError(
            f"Misaligned groups: A {frames_a.data.shape}, B {frames_b.data.shape}"
        )
    expected = (frames_a.bins, frames_a.channels, frames_b.channels)
    if undesired.matrices.shape != expected:
        raise ContractViolationError(
            f"ReTM shape {undesired.matrices.shape} does not match frames, expected {expected}"
        )
    prediction = np.einsum("fab,bft->aft", undesired.usable(), frames_b.data)
    estimate = frames_a.data - prediction

    out_energy = np.sum(np.abs(estimate) ** 2, axis=(0, 2))
    in_energy = np.sum(np.abs(frames_a.data) ** 2, axis=(0, 2))
    return SeparationOutput(
        frames=SpectralFrames(estimate, frames_a.sample_rate, frames_a.window_len, frames_a.hop),
        cancellation_db=_energy_ratio_db(out_energy, in_energy),
        failed_bins=undesired.failed_bins.copy(),
    )


def extract_all(
    frames_a: SpectralFrames,
    frames_b: SpectralFrames,
    undesired_by_speaker: Sequence[Retm],
) -> List[SeparationOutput]:
    """Extract every speaker, one undesired-source ReTM per speaker."""
    outputs = []
    for speaker, undesired in enumerate(undesired_by_speaker):
        output = extract(frames_a, frames_b, undesired)
        logger.info(
            f"Speaker {speaker}: median output/mixture energy "
            f"{float(np.median(output.cancellation_db)):.1f} dB"
        )
        outputs.append(output)
    return outputs


def reconstruct(output: SeparationOutput, mode: str = "reference") -> np.ndarray:
    """Time-domain mono signal of an extracted speaker.

    Args:
        output: Extraction result
        mode: "reference" for the first group-A channel, "average" for the
            mean over the Q_A channels

    Raises:
        ContractViolationError: For an unknown mode
    """
    if mode not in RECONSTRUCT_MODES:
        raise ContractViolationError(f"Unknown reconstruct mode '{mode}', expected one of {RECONSTRUCT_MODES}")
    frames = output.frames
    if mode == "reference":
        selected = frames.select([0])
    else:
        mean = frames.data.mean(axis=0, keepdims=True)
        selected = SpectralFrames(mean, frames.sample_rate, frames.window_len, frames.hop)
    return synthesize(selected)[0]
