#!/usr/bin/env python3
"""
ReTM Speaker Separation Tool

Simulates reverberant multi-microphone sessions, estimates relative transfer
matrices from calibration recordings, extracts each speaker and reports
SIR/SDR improvements.

Usage:
    python main.py simulate scenarios/desk_scale.json [--snr-sweep 0 -5 -10]
    python main.py separate --manifest output/desk_scale/snr_0dB/manifest.json [--method training]
    python main.py evaluate --manifest ... --estimates output/desk_scale/snr_0dB/training
    python main.py pipeline scenarios/desk_scale.json --methods training direct
    python main.py synth-signals --output-dir signals
"""

import argparse
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.adapters.audio.wav_adapter import WavAdapter
from src.core.audio_model import AudioBuffer
from src.core.config import Config
from src.core.exceptions import NumericalError
from src.core.pipeline_model import METHODS, RECONSTRUCT_MODES, PipelineConfig, SegmentSpec, SimulationManifest
from src.dsp import synthetic
from src.dsp.metrics import DEFAULT_FILTER_LEN
from src.services.evaluation_service import EvaluationService, combine_reports, summarize
from src.services.export_service import export_report
from src.services.output_lock import OutputLock
from src.services.separation_service import SeparationService, run_directory
from src.services.simulation_service import SimulationService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def parse_segment(value: str) -> SegmentSpec:
    """Parse PATH or PATH@START:STOP (frame indices, either bound may be empty)."""
    if "@" not in value:
        return SegmentSpec(value)
    path, _, frames = value.rpartition("@")
    start, sep, stop = frames.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"Segment range must look like PATH@START:STOP, got '{value}'")
    try:
        return SegmentSpec(path, int(start) if start else 0, int(stop) if stop else None)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Invalid frame range in '{value}'") from e


def _segment_dict(segment: Any) -> Any:
    return asdict(segment) if isinstance(segment, SegmentSpec) else segment


def build_pipeline_config(args: argparse.Namespace, config: Config, manifest_path: str) -> PipelineConfig:
    """Merge defaults, the optional --config file and explicit flags (flags win)."""
    stft_config = config.get_stft_config()
    data: Dict[str, Any] = {
        "window_len": stft_config["window_len"],
        "hop": stft_config["hop"],
        "pinv_tolerance": config.get_pinv_tolerance(),
        "output_dir": str(config.get_output_dir()),
    }
    if getattr(args, "config", None):
        data.update(PipelineConfig.read_file(args.config))
    overrides = {
        "method": getattr(args, "method", None),
        "window_len": args.window_len,
        "hop": args.hop,
        "pinv_tolerance": args.pinv_tol,
        "output_dir": args.output_dir,
        "seed": args.seed,
        "reconstruct_mode": args.reconstruct_mode,
        "noise_only": getattr(args, "noise_only", None),
        "noise_plus": getattr(args, "noise_plus", None),
        "undesired": getattr(args, "undesired", None),
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.window_len is not None and args.hop is None:
        data["hop"] = args.window_len // 2
    if args.reuse_artifacts:
        data["reuse_artifacts"] = True
    data["manifest_path"] = manifest_path
    data["noise_only"] = _segment_dict(data.get("noise_only"))
    data["noise_plus"] = [_segment_dict(s) for s in data.get("noise_plus") or []]
    data["undesired"] = [_segment_dict(s) for s in data.get("undesired") or []]
    return PipelineConfig.from_dict(data)


def cmd_simulate(args: argparse.Namespace, config: Config) -> List[Path]:
    output_dir = Path(args.output_dir or config.get_output_dir())
    with OutputLock(output_dir):
        manifests = SimulationService(config).simulate_file(
            args.scenario, output_dir, args.snr_sweep, args.window_len
        )
    print(f"✓ Wrote {len(manifests)} manifest(s)")
    return manifests


def cmd_separate(args: argparse.Namespace, config: Config) -> Dict[str, Any]:
    pipeline = build_pipeline_config(args, config, args.manifest)
    with OutputLock(pipeline.output_dir):
        return SeparationService(config).separate(pipeline)


def cmd_evaluate(args: argparse.Namespace, config: Config) -> Dict[str, str]:
    output_dir = Path(args.output_dir or config.get_output_dir())
    service = EvaluationService(config)
    with OutputLock(output_dir):
        report = service.evaluate(args.manifest, args.estimates or [], args.filter_len, args.window_len)
        report_dir = run_directory(output_dir, SimulationManifest.load(args.manifest))
        return service.write_report(report, report_dir, excel=args.excel, pdf=args.pdf)


def cmd_pipeline(args: argparse.Namespace, config: Config) -> Dict[str, str]:
    output_dir = Path(args.output_dir or config.get_output_dir())
    args.output_dir = str(output_dir)
    evaluation = EvaluationService(config)
    reports = []
    with OutputLock(output_dir):
        manifests = SimulationService(config).simulate_file(
            args.scenario, output_dir, args.snr_sweep, args.window_len
        )
        for manifest_path in manifests:
            pipeline = build_pipeline_config(args, config, str(manifest_path))
            estimate_dirs = [
                SeparationService(config).separate(replace(pipeline, method=method))["method_dir"]
                for method in args.methods
            ]
            report = evaluation.evaluate(str(manifest_path), estimate_dirs, args.filter_len, pipeline.window_len)
            evaluation.write_report(report, manifest_path.parent, excel=args.excel, pdf=args.pdf)
            reports.append(report)

        combined = combine_reports(reports)
        scenario_dir = manifests[0].parent.parent
        written = export_report(combined, summarize(combined), scenario_dir, excel=args.excel, pdf=args.pdf)
    print("\n" + summarize(combined).to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    return written


def cmd_synth_signals(args: argparse.Namespace, config: Config) -> List[Path]:
    output_dir = Path(args.output_dir)
    audio = WavAdapter()
    written = []
    for i in range(args.speech):
        samples = synthetic.speech_like(args.duration, args.sample_rate, seed=args.seed + i)
        path = output_dir / f"speech_{i}.wav"
        audio.write(path, AudioBuffer(samples, args.sample_rate), fmt="float32")
        written.append(path)
    for j in range(args.noise):
        samples = synthetic.stationary_noise(args.duration, args.sample_rate, seed=args.seed + 1000 + j)
        path = output_dir / f"noise_{j}.wav"
        audio.write(path, AudioBuffer(samples, args.sample_rate), fmt="float32")
        written.append(path)
    print(f"✓ Wrote {len(written)} signal(s) to {output_dir}")
    return written


def _add_separation_flags(parser: argparse.ArgumentParser, with_segments: bool) -> None:
    parser.add_argument("--config", help="Pipeline config JSON (flags override it)")
    parser.add_argument("--hop", type=int, help="STFT hop (default window/2)")
    parser.add_argument("--pinv-tol", type=float, help="Relative pseudoinverse tolerance")
    parser.add_argument("--seed", type=int, help="Run seed, recorded in separation.json and ReTM provenance")
    parser.add_argument("--reuse-artifacts", action="store_true", help="Reuse stored covariances and ReTMs")
    parser.add_argument("--reconstruct-mode", choices=RECONSTRUCT_MODES, help="Output channel selection")
    if with_segments:
        parser.add_argument("--method", choices=METHODS, help="ReTM estimator (default training)")
        parser.add_argument("--noise-only", type=parse_segment, help="Noise-only segment PATH[@START:STOP]")
        parser.add_argument("--noise-plus", type=parse_segment, nargs="+", help="Noise-plus-speaker segments, one per speaker")
        parser.add_argument("--undesired", type=parse_segment, nargs="+", help="Undesired-only segments for method direct")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="ReTM-based speaker separation: simulate, separate, evaluate")
    parser.add_argument("--log-level", help="Logging level (default from RETM_LOG_LEVEL or INFO)")
    parser.add_argument("--env-file", help="Path to .env file")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--output-dir", help="Output directory (default RETM_OUTPUT_DIR or ./output)")
        p.add_argument("--window-len", type=int, help="STFT window length (power of two)")

    simulate = sub.add_parser("simulate", help="Render a scenario to WAV files and a manifest")
    simulate.add_argument("scenario", help="Scenario JSON file")
    simulate.add_argument("--snr-sweep", type=float, nargs="+", help="SNRs in dB, one manifest each")
    common(simulate)

    separate = sub.add_parser("separate", help="Estimate ReTMs and extract every speaker")
    separate.add_argument("--manifest", required=True, help="Manifest written by simulate")
    common(separate)
    _add_separation_flags(separate, with_segments=True)

    evaluate = sub.add_parser("evaluate", help="Score estimates and write the CSV report")
    evaluate.add_argument("--manifest", required=True, help="Manifest written by simulate")
    evaluate.add_argument("--estimates", nargs="*", default=[], help="Estimate directories (one per method)")
    evaluate.add_argument("--filter-len", type=int, default=DEFAULT_FILTER_LEN, help="BSS-eval filter taps")
    evaluate.add_argument("--excel", action="store_true", help="Also write report.xlsx")
    evaluate.add_argument("--pdf", action="store_true", help="Also write summary.pdf")
    common(evaluate)

    pipeline = sub.add_parser("pipeline", help="simulate, separate and evaluate in one run")
    pipeline.add_argument("scenario", help="Scenario JSON file")
    pipeline.add_argument("--snr-sweep", type=float, nargs="+", help="SNRs in dB")
    pipeline.add_argument("--methods", nargs="+", choices=METHODS, default=["training"], help="Methods to compare")
    pipeline.add_argument("--filter-len", type=int, default=DEFAULT_FILTER_LEN, help="BSS-eval filter taps")
    pipeline.add_argument("--excel", action="store_true", help="Also write report.xlsx")
    pipeline.add_argument("--pdf", action="store_true", help="Also write summary.pdf")
    common(pipeline)
    _add_separation_flags(pipeline, with_segments=False)

    synth = sub.add_parser("synth-signals", help="Write deterministic stand-in source signals")
    synth.add_argument("--output-dir", required=True, help="Directory for the WAV files")
    synth.add_argument("--speech", type=int, default=3, help="Number of speech-like signals")
    synth.add_argument("--noise", type=int, default=2, help="Number of noise signals")
    synth.add_argument("--duration", type=float, default=90.0, help="Length in seconds")
    synth.add_argument("--sample-rate", type=int, default=16000, help="Sampling rate in Hz")
    synth.add_argument("--seed", type=int, default=0, help="Base seed")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "separate": cmd_separate,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "synth-signals": cmd_synth_signals,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    try:
        config = Config(args.env_file)
        logging.basicConfig(
            level=(args.log_level or config.get_log_level()).upper(),
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )
        COMMANDS[args.command](args, config)
        return EXIT_OK
    except KeyboardInterrupt:
        print("\n\n⚠ Interrupted by user")
        return EXIT_INPUT
    except NumericalError as e:
        print(f"\n✗ Numerical failure: {e}")
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        print(f"\n✗ Error: {e}")
        return EXIT_INPUT
    except RuntimeError as e:
        print(f"\n✗ Runtime error: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
