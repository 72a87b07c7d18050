"""Image-source room simulation and SNR-controlled mixing.

RIRs follow the Allen-Berkley image method in a shoebox room with a uniform
wall reflection coefficient derived from Sabine's formula. Image delays are
rounded to the nearest sample.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import oaconvolve

from src.adapters.audio.wav_adapter import read_wav, resample
from src.core.exceptions import ContractViolationError, InfeasibleScenarioError, InputError
from src.core.scenario_model import Position, Room, Scenario

logger = logging.getLogger(__name__)

SABINE_CONSTANT = 0.161
MIN_SOURCE_MIC_DISTANCE = 1e-6

_PARITIES = np.array(list(itertools.product((0, 1), repeat=3)))


def sabine_reflection(room: Room) -> float:
    """Uniform pressure reflection coefficient for the room's T60.

    Raises:
        InfeasibleScenarioError: If the required absorption exceeds 1
    """
    if room.t60 == 0:
        return 0.0
    alpha = SABINE_CONSTANT * room.volume / (room.surface * room.t60)
    if alpha > 1.0:
        raise InfeasibleScenarioError(
            f"T60 of {room.t60} s is too short for a {room.dimensions} m room "
            f"(Sabine absorption {alpha:.2f} > 1)"
        )
    return float(np.sqrt(1.0 - alpha))


def _check_pair(room: Room, source: Position, mic: Position) -> float:
    for name, pos in (("source", source), ("microphone", mic)):
        if not room.contains(pos):
            raise ContractViolationError(f"The {name} at {pos} is not strictly inside the room")
    distance = float(np.linalg.norm(np.subtract(source, mic)))
    if distance < MIN_SOURCE_MIC_DISTANCE:
        raise ContractViolationError(f"Source at {source} coincides with microphone at {mic}")
    return distance


def rir_length(room: Room, source: Position, mic: Position, sample_rate: int) -> int:
    """Number of taps: ceil(t60 * fs), extended to hold the direct path."""
    distance = _check_pair(room, source, mic)
    direct = int(np.rint(distance * sample_rate / room.speed_of_sound))
    return max(int(np.ceil(room.t60 * sample_rate)), direct + 1)


def generate_rir(
    room: Room,
    source: Position,
    mic: Position,
    sample_rate: int = 16000,
    seed: int = 0,
    length: Optional[int] = None,
) -> np.ndarray:
    """Room impulse response from one source to one microphone.

    Args:
        room: Room geometry and T60
        source: Source position in meters
        mic: Microphone position in meters
        sample_rate: Sampling rate in Hz
        seed: Seed for image jitter (only used when room.image_jitter > 0)
        length: Number of taps (default: rir_length)

    Returns:
        Causal FIR of the requested length

    Raises:
        ContractViolationError: For positions outside the room or coincident positions
        InfeasibleScenarioError: If the T60 cannot be reached
    """
    beta = sabine_reflection(room)
    n_taps = length or rir_length(room, source, mic, sample_rate)
    _check_pair(room, source, mic)
    dims = np.asarray(room.dimensions)
    c = room.speed_of_sound

    orders = np.ceil(n_taps * c / sample_rate / (2.0 * dims)).astype(int)
    if beta == 0.0:
        orders[:] = 0
    axes = [np.arange(-o, o + 1) for o in orders]
    r = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 1, 3)
    r = np.broadcast_to(r, (r.shape[0], 8, 3)).reshape(-1, 3)
    p = np.tile(_PARITIES, (r.shape[0] // 8, 1))

    reflections = (np.abs(r - p) + np.abs(r)).sum(axis=1)
    if room.max_reflection_order >= 0:
        keep = reflections <= room.max_reflection_order
        r, p, reflections = r[keep], p[keep], reflections[keep]

    images = (1 - 2 * p) * np.asarray(source) + 2 * r * dims
    if room.image_jitter > 0:
        rng = np.random.default_rng(seed)
        jitter = rng.uniform(-room.image_jitter, room.image_jitter, size=images.shape)
        jitter[reflections == 0] = 0.0
        images = images + jitter

    distances = np.linalg.norm(images - np.asarray(mic), axis=1)
    taps = np.rint(distances * sample_rate / c).astype(np.int64)
    amplitudes = np.power(beta, reflections) / (4.0 * np.pi * distances)
    valid = taps < n_taps
    return np.bincount(taps[valid], weights=amplitudes[valid], minlength=n_taps)[:n_taps]


def _source_seed(seed: int, source_index: int) -> int:
    return int(np.random.SeedSequence([seed, source_index]).generate_state(1)[0])


def generate_rirs(scenario: Scenario, workers: int = 1) -> np.ndarray:
    """All source-to-microphone RIRs of a placed scenario, shaped (sources, mics, taps)."""
    room, fs = scenario.room, scenario.sample_rate
    pairs = [(l, q) for l in range(len(scenario.sources)) for q in range(len(scenario.microphones))]
    length = max(
        rir_length(room, scenario.sources[l].position, scenario.microphones[q], fs) for l, q in pairs
    )

    def job(pair):
        l, q = pair
        return generate_rir(
            room, scenario.sources[l].position, scenario.microphones[q], fs,
            seed=_source_seed(scenario.seed, l), length=length,
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        responses = list(pool.map(job, pairs))
    logger.info(f"Generated {len(pairs)} RIRs of {length} taps")
    return np.stack(responses).reshape(len(scenario.sources), len(scenario.microphones), length)


def measure_t60(rir: np.ndarray, sample_rate: int, decay_db: float = 20.0) -> float:
    """Reverberation time from Schroeder backward integration.

    Fits a line to the energy-decay curve between -5 dB and -(5 + decay_db) dB and
    extrapolates to 60 dB of decay. Returns 0.0 for responses with no measurable decay.
    """
    energy = np.asarray(rir, dtype=np.float64) ** 2
    total = energy.sum()
    if total == 0:
        raise ContractViolationError("Cannot measure T60 of an all-zero response")
    edc = np.cumsum(energy[::-1])[::-1] / total
    edc_db = 10.0 * np.log10(np.maximum(edc, np.finfo(float).tiny))
    below_start = np.flatnonzero(edc_db <= -5.0)
    below_stop = np.flatnonzero(edc_db <= -5.0 - decay_db)
    if below_start.size == 0 or below_stop.size == 0 or below_stop[0] - below_start[0] < 2:
        return 0.0
    span = slice(below_start[0], below_stop[0])
    t = np.arange(len(edc_db))[span] / sample_rate
    slope, _ = np.polyfit(t, edc_db[span], 1)
    return float(-60.0 / slope) if slope < 0 else 0.0


def place_randomly(scenario: Scenario) -> Scenario:
    """Fill in missing microphone and source positions from the scenario seed.

    Positions are uniform inside the room, at least `layout_margin` from every wall,
    and sources keep `layout_min_distance` from every microphone.

    Raises:
        InfeasibleScenarioError: If no valid source position can be found
    """
    if scenario.is_placed:
        return scenario
    rng = np.random.default_rng([scenario.seed, 1])
    dims = np.asarray(scenario.room.dimensions)
    margin = min(scenario.layout_margin, 0.45 * dims.min())
    low, high = np.full(3, margin), dims - margin

    mics = np.asarray(scenario.microphones, dtype=float).reshape(-1, 3)
    if mics.size == 0:
        mics = rng.uniform(low, high, size=(scenario.mic_count, 3))

    sources = []
    for source in scenario.sources:
        if source.position is not None:
            sources.append(source)
            continue
        for _ in range(1000):
            candidate = rng.uniform(low, high)
            if np.min(np.linalg.norm(mics - candidate, axis=1)) >= scenario.layout_min_distance:
                break
        else:
            raise InfeasibleScenarioError(
                f"Could not place a source {scenario.layout_min_distance} m from every microphone"
            )
        sources.append(replace(source, position=tuple(candidate)))

    return replace(
        scenario,
        sources=tuple(sources),
        microphones=tuple(tuple(m) for m in mics),
        mic_count=len(mics),
    )


def load_source_signals(scenario: Scenario, offset_s: float, duration_s: float) -> np.ndarray:
    """Read, resample and excerpt every source signal.

    Returns:
        Array shaped (sources, samples)

    Raises:
        InputError: If a file is missing or shorter than offset + duration
    """
    fs = scenario.sample_rate
    start, count = int(round(offset_s * fs)), int(round(duration_s * fs))
    signals = np.empty((len(scenario.sources), count))
    for l, source in enumerate(scenario.sources):
        path = scenario.resolve_signal_path(source)
        buffer = read_wav(path)
        if buffer.sample_rate != fs:
            buffer = resample(buffer, fs)
        mono = buffer.to_mono().samples[0]
        if mono.size < start + count:
            raise InputError(
                f"Source file {path} has {mono.size / fs:.1f} s, "
                f"needs {(start + count) / fs:.1f} s (offset {offset_s} s + {duration_s} s)"
            )
        signals[l] = mono[start:start + count]
    return signals


@dataclass(frozen=True)
class RenderResult:
    """One rendered recording: microphone mixture plus what went into it."""

    mixture: np.ndarray  # (mics, samples), includes sensor noise
    images: np.ndarray  # (active sources, mics, samples), noise gain applied
    active: Tuple[int, ...]
    sensor_noise: np.ndarray  # (mics, samples)
    noise_gain: float
    sensor_noise_std: np.ndarray  # (mics,)
    achieved_snr_db: float
    sample_rate: int


def _power(x: np.ndarray) -> np.ndarray:
    return np.mean(x ** 2, axis=-1)


def mean_snr_db(speech_images: np.ndarray, noise_images: np.ndarray) -> float:
    """Mean over microphones of the per-mic speech-to-noise power ratio in dB.

    Args:
        speech_images: Speech images shaped (speech sources, mics, samples)
        noise_images: Noise images shaped (noise sources, mics, samples)
    """
    speech = _power(speech_images.sum(axis=0))
    noise = _power(noise_images.sum(axis=0))
    return float(np.mean(10.0 * np.log10(speech / noise)))


def _convolve_sources(
    rirs: np.ndarray, signals: np.ndarray, active: Sequence[int], workers: int
) -> np.ndarray:
    n = signals.shape[1]

    def job(l):
        return oaconvolve(signals[l][np.newaxis, :], rirs[l], axes=-1)[:, :n]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.stack(list(pool.map(job, active)))


def _render(
    scenario: Scenario,
    rirs: np.ndarray,
    signals: np.ndarray,
    active: Sequence[int],
    noise_gain: Optional[float],
    sensor_noise_std: Optional[np.ndarray],
    stream: int,
    workers: int,
    keep_images: bool = True,
) -> RenderResult:
    active = tuple(active)
    shape = (len(scenario.microphones), signals.shape[1])
    kinds = [scenario.sources[l].kind for l in active]
    speech_rows = [i for i, k in enumerate(kinds) if k == "speech"]
    noise_rows = [i for i, k in enumerate(kinds) if k == "noise"]
    mixture = np.zeros(shape)
    achieved = float("inf")

    if keep_images or noise_gain is None:
        images = _convolve_sources(rirs, signals, active, workers) if active else np.zeros((0,) + shape)
        if noise_gain is None:
            noise_gain = 1.0
            if speech_rows and noise_rows:
                unit_snr = mean_snr_db(images[speech_rows], images[noise_rows])
                noise_gain = float(10.0 ** ((unit_snr - scenario.snr_db) / 20.0))
        if noise_rows:
            images[noise_rows] *= noise_gain
        if speech_rows and noise_rows:
            achieved = mean_snr_db(images[speech_rows], images[noise_rows])
        for image in images:
            mixture += image
    else:
        # streamed per source, images are not retained
        images = np.zeros((0,) + shape)
        for row, l in enumerate(active):
            image = _convolve_sources(rirs, signals, [l], 1)[0]
            mixture += image * noise_gain if row in noise_rows else image

    if sensor_noise_std is None:
        if scenario.sensor_noise_snr_db is None:
            sensor_noise_std = np.zeros(len(scenario.microphones))
        else:
            sensor_noise_std = np.sqrt(_power(mixture) / 10.0 ** (scenario.sensor_noise_snr_db / 10.0))
    rng = np.random.default_rng([scenario.seed, stream])
    sensor_noise = rng.standard_normal(mixture.shape) * sensor_noise_std[:, np.newaxis]

    return RenderResult(
        mixture=mixture + sensor_noise,
        images=images,
        active=active,
        sensor_noise=sensor_noise,
        noise_gain=noise_gain,
        sensor_noise_std=sensor_noise_std,
        achieved_snr_db=achieved,
        sample_rate=scenario.sample_rate,
    )


def render_mixture(
    scenario: Scenario,
    signals: Optional[np.ndarray] = None,
    rirs: Optional[np.ndarray] = None,
    workers: int = 1,
) -> RenderResult:
    """Render the session recording with every source active.

    Noise sources share one gain chosen so that the mean per-mic
    speech-to-noise ratio equals scenario.snr_db; white Gaussian sensor
    noise is then added per mic at scenario.sensor_noise_snr_db.

    Args:
        scenario: Placed scenario
        signals: Source signals (sources, samples); read from the scenario files when omitted
        rirs: Precomputed RIRs (sources, mics, taps)
        workers: Thread count for RIR generation and convolution

    Returns:
        RenderResult with per-source clean images retained
    """
    scenario.validate()
    if not scenario.is_placed:
        raise ContractViolationError("Scenario positions must be placed before rendering")
    if signals is None:
        signals = load_source_signals(scenario, 0.0, scenario.duration_s)
    if rirs is None:
        rirs = generate_rirs(scenario, workers)
    return _render(scenario, rirs, signals, range(len(scenario.sources)), None, None, 0, workers)


def calibration_plan(scenario: Scenario) -> Dict[str, Tuple[int, ...]]:
    """Active source sets of the pre-session recordings, keyed by segment name."""
    speech, noise = scenario.speech_indices, scenario.noise_indices
    plan = {"noise_only": tuple(noise)}
    for k, l in enumerate(speech):
        plan[f"noise_plus_{k}"] = tuple(sorted(noise + [l]))
    for k, l in enumerate(speech):
        plan[f"undesired_{k}"] = tuple(i for i in range(len(scenario.sources)) if i != l)
    return plan


def render_calibration(
    scenario: Scenario,
    session: RenderResult,
    signals: Optional[np.ndarray] = None,
    rirs: Optional[np.ndarray] = None,
    workers: int = 1,
) -> Dict[str, RenderResult]:
    """Render the pre-session calibration recordings.

    Each recording reuses the session's noise gain and sensor-noise level and draws
    an independent sensor-noise stream. Source excerpts start after the session excerpt.
    """
    if signals is None:
        signals = load_source_signals(scenario, scenario.duration_s, scenario.calibration_duration_s)
    if rirs is None:
        rirs = generate_rirs(scenario, workers)
    renders = {}
    for stream, (name, active) in enumerate(calibration_plan(scenario).items(), start=1):
        renders[name] = _render(
            scenario, rirs, signals, active, session.noise_gain, session.sensor_noise_std, stream, workers,
            keep_images=False,
        )
    return renders
