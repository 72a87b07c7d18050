"""Service for estimating ReTMs from calibration segments and separating speakers."""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from src.adapters.audio.wav_adapter import WavAdapter
from src.core.audio_model import AudioBuffer
from src.core.config import Config
from src.core.exceptions import InputError
from src.core.pipeline_model import PipelineConfig, SegmentSpec, SimulationManifest
from src.dsp import covariance, retm, separation, stft
from src.dsp.covariance import CovariancePair
from src.services.artifact_storage import ArtifactStorage
from src.services.simulation_service import snr_label

logger = logging.getLogger(__name__)


def run_directory(output_dir: Path, manifest: SimulationManifest) -> Path:
    """<output_dir>/<scenario_id>/snr_<x>dB, shared by separate and evaluate."""
    return Path(output_dir) / manifest.scenario_id / snr_label(manifest.snr_db)


class SeparationService:
    """Runs stft -> covariance -> retm -> separation for one manifest."""

    def __init__(self, config: Optional[Config] = None, audio: Optional[WavAdapter] = None):
        """Initialize separation service.

        Args:
            config: Configuration instance (creates new if not provided)
            audio: Audio adapter for reading mixtures and writing estimates
        """
        self.config = config or Config()
        self.audio = audio or WavAdapter()

    def _frames(self, path: Path, manifest: SimulationManifest, pipeline: PipelineConfig) -> stft.SpectralFrames:
        buffer = self.audio.read(path)
        n_mics = len(manifest.group_a) + len(manifest.group_b)
        if buffer.sample_rate != manifest.sample_rate:
            raise InputError(f"{path} is sampled at {buffer.sample_rate} Hz, manifest says {manifest.sample_rate} Hz")
        if buffer.channels != n_mics:
            raise InputError(f"{path} has {buffer.channels} channels, scenario has {n_mics} microphones")
        return stft.analyze(buffer.samples, pipeline.window_len, pipeline.hop, buffer.sample_rate)

    def _segment_covariance(
        self,
        name: str,
        segment: SegmentSpec,
        manifest: SimulationManifest,
        pipeline: PipelineConfig,
        storage: ArtifactStorage,
    ) -> CovariancePair:
        key = f"{name}_w{pipeline.window_len}_h{pipeline.hop}"
        if pipeline.reuse_artifacts and storage.has_covariance(key):
            logger.info(f"Reusing covariance artifact {key}")
            return storage.load_covariance(key)
        frames = self._frames(Path(segment.path), manifest, pipeline)
        pair = covariance.estimate(
            frames.select(manifest.group_a), frames.select(manifest.group_b), segment.frame_range
        )
        storage.save_covariance(key, pair, {
            "segment": segment.path,
            "frame_range": list(segment.frame_range) if segment.frame_range else None,
            "scenario_hash": manifest.scenario_hash,
        })
        return pair

    def _estimate(
        self,
        speaker: int,
        pipeline: PipelineConfig,
        manifest: SimulationManifest,
        storage: ArtifactStorage,
        session: Optional[CovariancePair],
    ) -> retm.Retm:
        tol = pipeline.pinv_tolerance
        provenance = {
            "scenario_hash": manifest.scenario_hash,
            "window_len": pipeline.window_len,
            "hop": pipeline.hop,
            "seed": pipeline.seed,
        }

        def cov(name: str, segment: SegmentSpec) -> CovariancePair:
            return self._segment_covariance(name, segment, manifest, pipeline, storage)

        if pipeline.method == "direct":
            segment = pipeline.undesired[speaker]
            return retm.estimate_direct(
                cov(f"undesired_{speaker}", segment), tol, {**provenance, "segment": segment.path}
            )

        noise_only = cov("noise_only", pipeline.noise_only)
        noise_plus = [cov(f"noise_plus_{k}", s) for k, s in enumerate(pipeline.noise_plus)]
        if pipeline.method == "training":
            return retm.estimate_undesired_for_speaker(noise_only, noise_plus, speaker, tol, provenance)
        if pipeline.method == "subset":
            parts = [noise_only] + [
                covariance.subtract(pair, noise_only) for k, pair in enumerate(noise_plus) if k != speaker
            ]
            return retm.estimate_subset(parts, tol, {**provenance, "target": speaker})
        # subtraction: remove the target's own covariance from the session statistics
        target = covariance.subtract(noise_plus[speaker], noise_only)
        return retm.estimate_by_subtraction(session, target, tol, {**provenance, "target": speaker})

    def separate(self, pipeline: PipelineConfig) -> Dict[str, object]:
        """Separate every speaker of a simulated session.

        Args:
            pipeline: Separation settings; missing segments are taken from the manifest

        Returns:
            Dictionary with the estimate paths, ReTM artifact paths and the run directory

        Raises:
            ContractViolationError: If required segments are missing
            InputError: If an input file is missing or inconsistent
            NumericalError: If more than half of the bins fail for some speaker
        """
        manifest = SimulationManifest.load(pipeline.manifest_path)
        pipeline = pipeline.with_manifest_segments(manifest)
        n_speakers = len(manifest.speech_indices)
        pipeline.validate_segments(n_speakers)

        run_dir = run_directory(Path(pipeline.output_dir), manifest)
        method_dir = run_dir / pipeline.method
        storage = ArtifactStorage(run_dir / "artifacts")

        frames = self._frames(manifest.resolve(manifest.mixture_path), manifest, pipeline)
        frames_a = frames.select(manifest.group_a)
        frames_b = frames.select(manifest.group_b)
        session = covariance.estimate(frames_a, frames_b) if pipeline.method == "subtraction" else None

        undesired: List[retm.Retm] = []
        retm_paths = []
        for k in range(n_speakers):
            key = f"retm_{pipeline.method}_speaker{k}_w{pipeline.window_len}_h{pipeline.hop}"
            if pipeline.reuse_artifacts and storage.has_retm(key):
                logger.info(f"Reusing ReTM artifact {key}")
                estimate = storage.load_retm(key)
            else:
                estimate = self._estimate(k, pipeline, manifest, storage, session)
                storage.save_retm(key, estimate)
            for warning in estimate.warnings:
                print(f"⚠ Speaker {k}: {warning}")
            undesired.append(estimate)
            retm_paths.append(str(storage.retm_path(key)))

        outputs = separation.extract_all(frames_a, frames_b, undesired)
        estimate_paths = []
        diagnostics = []
        for k, output in enumerate(outputs):
            audio = separation.reconstruct(output, pipeline.reconstruct_mode)
            padded = np.zeros(manifest.session_samples)
            padded[:min(audio.size, padded.size)] = audio[:padded.size]
            path = method_dir / f"speaker_{k}.wav"
            self.audio.write(path, AudioBuffer(padded, manifest.sample_rate), fmt="float32")
            estimate_paths.append(str(path))
            diagnostics.append({
                "speaker": k,
                "failed_bins": int(output.failed_bins.sum()),
                "median_output_to_mixture_db": float(np.median(output.cancellation_db)),
                "warnings": list(undesired[k].warnings),
            })
            print(f"✓ Speaker {k} extracted -> {path}")

        summary = {
            "method": pipeline.method,
            "manifest": str(Path(pipeline.manifest_path).absolute()),
            "window_len": pipeline.window_len,
            "hop": pipeline.hop,
            "seed": pipeline.seed,
            "reconstruct_mode": pipeline.reconstruct_mode,
            "estimates": [Path(p).name for p in estimate_paths],
            "retm_artifacts": retm_paths,
            "speakers": diagnostics,
        }
        (method_dir / "separation.json").write_text(json.dumps(summary, indent=2))
        return {"run_dir": str(run_dir), "method_dir": str(method_dir), "estimates": estimate_paths, "retms": retm_paths}
