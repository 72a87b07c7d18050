"""Service for scoring separated speakers against the clean source images."""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.adapters.audio.wav_adapter import WavAdapter
from src.core.config import Config
from src.core.exceptions import InputError
from src.core.pipeline_model import SimulationManifest
from src.dsp import metrics, stft
from src.services.export_service import REPORT_COLUMNS, REPORT_SCHEMA_VERSION, empty_report, export_report

logger = logging.getLogger(__name__)

UNPROCESSED = "unprocessed"
SUMMARY_COLUMNS = ["sir_db", "sdr_db", "sir_improvement_db", "sdr_improvement_db"]


def summarize(report: pd.DataFrame) -> pd.DataFrame:
    """Average metrics across speakers per (method, snr_db).

    Returns:
        One row per method and SNR with mean SIR/SDR and mean improvements
    """
    if report.empty:
        return pd.DataFrame(columns=["method", "snr_db"] + SUMMARY_COLUMNS)
    numeric = report.astype({c: float for c in SUMMARY_COLUMNS})
    summary = numeric.groupby(["method", "snr_db"], sort=False)[SUMMARY_COLUMNS].mean().reset_index()
    return summary.sort_values(["snr_db", "method"], ascending=[False, True], kind="stable").reset_index(drop=True)


class EvaluationService:
    """Builds the per-speaker SIR/SDR report for one simulated session."""

    def __init__(self, config: Optional[Config] = None, audio: Optional[WavAdapter] = None):
        """Initialize evaluation service.

        Args:
            config: Configuration instance (creates new if not provided)
            audio: Audio adapter for reading estimates and references
        """
        self.config = config or Config()
        self.audio = audio or WavAdapter()

    def _reference_channel(self, path: Path, manifest: SimulationManifest) -> np.ndarray:
        buffer = self.audio.read(path)
        if buffer.num_samples != manifest.session_samples:
            raise InputError(
                f"{path} has {buffer.num_samples} samples, manifest expects {manifest.session_samples}"
            )
        return buffer.samples[manifest.reference_mic]

    def _estimate_signal(self, path: Path, manifest: SimulationManifest) -> np.ndarray:
        buffer = self.audio.read(path)
        if buffer.num_samples != manifest.session_samples:
            raise InputError(
                f"Estimate {path} has {buffer.num_samples} samples, manifest expects {manifest.session_samples}"
            )
        return buffer.samples[0]

    @staticmethod
    def _estimate_dir_info(estimate_dir: Path) -> Dict[str, object]:
        info_file = estimate_dir / "separation.json"
        if info_file.exists():
            try:
                return json.loads(info_file.read_text())
            except json.JSONDecodeError as e:
                raise InputError(f"Malformed separation summary {info_file}") from e
        return {"method": estimate_dir.name}

    def evaluate(
        self,
        manifest_path: str,
        estimate_dirs: Sequence[str],
        filter_len: int = metrics.DEFAULT_FILTER_LEN,
        window_len: Optional[int] = None,
    ) -> pd.DataFrame:
        """Score every speaker for the unprocessed mixture and each estimate directory.

        Args:
            manifest_path: Manifest written by the simulation
            estimate_dirs: Directories holding speaker_<k>.wav files (one per method)
            filter_len: BSS-eval distortion filter length
            window_len: STFT window whose edge frames are excluded (default from config)

        Returns:
            Report DataFrame with REPORT_COLUMNS; header only for an empty estimate set

        Raises:
            InputError: If files are missing or lengths disagree with the manifest
        """
        if not estimate_dirs:
            print("⚠ No estimates given, writing an empty report")
            return empty_report()

        manifest = SimulationManifest.load(manifest_path)
        window_len = window_len or self.config.get_stft_config()["window_len"]
        keep = stft.interior(manifest.session_samples, window_len)
        references = np.stack([
            self._reference_channel(manifest.resolve(p), manifest) for p in manifest.image_paths
        ])[:, keep]
        mixture = self._reference_channel(manifest.resolve(manifest.mixture_path), manifest)[keep]
        workers = self.config.get_worker_count()

        def score(signal: np.ndarray, speaker: int, baseline: Optional[metrics.EvalResult]):
            return metrics.evaluate(
                signal, references, manifest.speech_indices[speaker], baseline, filter_len, speaker=speaker
            )

        speakers = range(len(manifest.speech_indices))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            baselines = list(pool.map(lambda k: score(mixture, k, None), speakers))
            rows = [self._row(manifest, UNPROCESSED, result) for result in baselines]

            for directory in estimate_dirs:
                estimate_dir = Path(directory)
                method = str(self._estimate_dir_info(estimate_dir).get("method", estimate_dir.name))
                signals = [
                    self._estimate_signal(estimate_dir / f"speaker_{k}.wav", manifest)[keep] for k in speakers
                ]
                results = list(pool.map(lambda k: score(signals[k], k, baselines[k]), speakers))
                rows.extend(self._row(manifest, method, result) for result in results)
                for result in results:
                    print(f"✓ {method} speaker {result.speaker}: SIR {result.sir_db:.2f} dB "
                          f"(+{result.sir_improvement_db:.2f}), SDR {result.sdr_db:.2f} dB "
                          f"(+{result.sdr_improvement_db:.2f})")

        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    @staticmethod
    def _row(manifest: SimulationManifest, method: str, result: metrics.EvalResult) -> Dict[str, object]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "scenario_id": manifest.scenario_id,
            "snr_db": manifest.snr_db,
            "speaker": result.speaker,
            "method": method,
            "sir_db": result.sir_db,
            "sdr_db": result.sdr_db,
            "sir_improvement_db": result.sir_improvement_db,
            "sdr_improvement_db": result.sdr_improvement_db,
            "stoi": None,
        }

    def write_report(
        self,
        report: pd.DataFrame,
        output_dir: Path,
        excel: bool = False,
        pdf: bool = False,
    ) -> Dict[str, str]:
        """Export the report and its summary.

        Returns:
            Mapping of format name to written path
        """
        return export_report(report, summarize(report), Path(output_dir), excel=excel, pdf=pdf)


def combine_reports(reports: List[pd.DataFrame]) -> pd.DataFrame:
    """Concatenate per-SNR reports into one table."""
    frames = [r for r in reports if not r.empty]
    if not frames:
        return empty_report()
    return pd.concat(frames, ignore_index=True)
