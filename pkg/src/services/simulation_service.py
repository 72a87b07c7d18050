"""Service for rendering scenarios to WAV files and manifests."""

import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from src.adapters.audio.wav_adapter import WavAdapter
from src.core.audio_model import AudioBuffer
from src.core.config import Config
from src.core.pipeline_model import SimulationManifest
from src.core.scenario_model import Scenario
from src.dsp import roomsim

logger = logging.getLogger(__name__)


def snr_label(snr_db: float) -> str:
    """Directory name for one SNR, e.g. snr_-5dB."""
    return f"snr_{snr_db:g}dB"


class SimulationService:
    """Renders a scenario (optionally over an SNR sweep) to disk."""

    def __init__(self, config: Optional[Config] = None, audio: Optional[WavAdapter] = None):
        """Initialize simulation service.

        Args:
            config: Configuration instance (creates new if not provided)
            audio: Audio adapter used for writing WAV files
        """
        self.config = config or Config()
        self.audio = audio or WavAdapter()

    def simulate(
        self,
        scenario: Scenario,
        output_dir: Path,
        snr_sweep: Optional[Sequence[float]] = None,
        window_len: Optional[int] = None,
    ) -> List[Path]:
        """Render the session and calibration recordings for each SNR.

        Layout per SNR: <output_dir>/<scenario_id>/snr_<x>dB/ with mixture.wav,
        images/source_<l>.wav, calibration/<segment>.wav and manifest.json.

        Args:
            scenario: Scenario (positions drawn from its seed when missing)
            output_dir: Root output directory
            snr_sweep: SNRs in dB; defaults to the scenario's own SNR
            window_len: STFT window used downstream, for the RIR-length warning

        Returns:
            Paths of the written manifests

        Raises:
            ContractViolationError: If the scenario is invalid
            InfeasibleScenarioError: If the room or layout cannot be realized
            InputError: If a source signal is missing or too short
        """
        workers = self.config.get_worker_count()
        window_len = window_len or self.config.get_stft_config()["window_len"]
        scenario.validate()
        if not scenario.is_placed:
            scenario = roomsim.place_randomly(scenario)
            print(f"✓ Placed {len(scenario.sources)} sources and {scenario.num_mics} microphones at random")
        scenario.validate()

        rirs = roomsim.generate_rirs(scenario, workers)
        measured_t60 = roomsim.measure_t60(rirs[0, scenario.reference_mic], scenario.sample_rate)
        print(f"✓ Generated {rirs.shape[0]}x{rirs.shape[1]} RIRs of {rirs.shape[2]} taps "
              f"(measured T60 {measured_t60:.2f} s, target {scenario.room.t60:.2f} s)")
        if rirs.shape[2] > window_len:
            logger.warning(
                f"RIR length {rirs.shape[2]} exceeds STFT window {window_len}; "
                "the multiplicative transfer function model will be approximate"
            )

        session_signals = roomsim.load_source_signals(scenario, 0.0, scenario.duration_s)
        calibration_signals = roomsim.load_source_signals(
            scenario, scenario.duration_s, scenario.calibration_duration_s
        )

        manifests = []
        sweep = list(snr_sweep) if snr_sweep else [scenario.snr_db]
        for snr in sweep:
            current = scenario.with_snr(snr)
            run_dir = Path(output_dir) / current.scenario_id / snr_label(snr)
            session = roomsim.render_mixture(current, session_signals, rirs, workers)
            calibration = roomsim.render_calibration(current, session, calibration_signals, rirs, workers)

            fs = current.sample_rate
            self.audio.write(run_dir / "mixture.wav", AudioBuffer(session.mixture, fs))
            image_paths = []
            for row, l in enumerate(session.active):
                relative = f"images/source_{l}.wav"
                self.audio.write(run_dir / relative, AudioBuffer(session.images[row], fs))
                image_paths.append(relative)
            calibration_paths = {}
            for name, render in calibration.items():
                relative = f"calibration/{name}.wav"
                self.audio.write(run_dir / relative, AudioBuffer(render.mixture, fs))
                calibration_paths[name] = relative

            manifest = SimulationManifest(
                scenario_id=current.scenario_id,
                scenario_hash=current.fingerprint(),
                snr_db=float(snr),
                achieved_snr_db=session.achieved_snr_db,
                noise_gain=session.noise_gain,
                sensor_noise_std=[float(v) for v in session.sensor_noise_std],
                seed=current.seed,
                sample_rate=fs,
                group_a=list(current.group_a),
                group_b=list(current.group_b),
                speech_indices=current.speech_indices,
                noise_indices=current.noise_indices,
                rir_length=int(rirs.shape[2]),
                measured_t60=measured_t60,
                session_samples=int(session.mixture.shape[1]),
                mixture_path="mixture.wav",
                image_paths=image_paths,
                calibration_paths=calibration_paths,
                scenario=current.to_dict(),
            )
            manifest_path = run_dir / "manifest.json"
            manifest.save(manifest_path)
            manifests.append(manifest_path)
            achieved = "n/a" if not np.isfinite(session.achieved_snr_db) else f"{session.achieved_snr_db:.2f} dB"
            print(f"✓ Rendered {current.scenario_id} at {snr:g} dB SNR (achieved {achieved}) -> {manifest_path}")
        return manifests

    def simulate_file(
        self,
        scenario_path: str,
        output_dir: Path,
        snr_sweep: Optional[Sequence[float]] = None,
        window_len: Optional[int] = None,
    ) -> List[Path]:
        """Load a scenario file and simulate it."""
        return self.simulate(Scenario.load(scenario_path), output_dir, snr_sweep, window_len)
