"""Pipeline configuration and simulation manifest models."""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.core.exceptions import ContractViolationError, InputError

METHODS = ("direct", "subtraction", "subset", "training")
RECONSTRUCT_MODES = ("reference", "average")


@dataclass(frozen=True)
class SegmentSpec:
    """A calibration segment: a whole file or a frame range within it."""

    path: str
    start_frame: Optional[int] = None
    stop_frame: Optional[int] = None

    @property
    def frame_range(self) -> Optional[tuple]:
        if self.start_frame is None and self.stop_frame is None:
            return None
        return (self.start_frame or 0, self.stop_frame)

    @classmethod
    def from_value(cls, value: Any) -> "SegmentSpec":
        """Accept either a bare path string or a mapping."""
        if isinstance(value, str):
            return cls(path=value)
        return cls(**value)


@dataclass(frozen=True)
class SimulationManifest:
    """Everything `simulate` produced for one scenario at one SNR."""

    scenario_id: str
    scenario_hash: str
    snr_db: float
    achieved_snr_db: float
    noise_gain: float
    sensor_noise_std: List[float]
    seed: int
    sample_rate: int
    group_a: List[int]
    group_b: List[int]
    speech_indices: List[int]
    noise_indices: List[int]
    rir_length: int
    measured_t60: float
    session_samples: int
    mixture_path: str
    image_paths: List[str]
    calibration_paths: Dict[str, str]
    scenario: Dict[str, Any] = field(default_factory=dict)
    base_dir: str = field(default=".", compare=False)

    @property
    def reference_mic(self) -> int:
        return self.group_a[0]

    def resolve(self, relative: str) -> Path:
        """Resolve a manifest-relative path."""
        path = Path(relative)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("base_dir")
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path: Path) -> None:
        """Write the manifest next to the files it references."""
        path.write_text(self.to_json())

    @classmethod
    def load(cls, path: str) -> "SimulationManifest":
        """Load a manifest file.

        Raises:
            InputError: If the file is missing or malformed
        """
        manifest_file = Path(path)
        try:
            data = json.loads(manifest_file.read_text())
            return cls(**data, base_dir=str(manifest_file.parent.absolute()))
        except OSError as e:
            raise InputError(f"Cannot read manifest {manifest_file}: {e}") from e
        except (json.JSONDecodeError, TypeError) as e:
            raise InputError(f"Malformed manifest {manifest_file}: {e}") from e


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for one separation run."""

    manifest_path: str
    method: str = "training"
    window_len: int = 8192
    hop: Optional[int] = None
    pinv_tolerance: Optional[float] = None
    output_dir: str = "output"
    seed: int = 0
    reuse_artifacts: bool = False
    reconstruct_mode: str = "reference"
    noise_only: Optional[SegmentSpec] = None
    noise_plus: List[SegmentSpec] = field(default_factory=list)
    undesired: List[SegmentSpec] = field(default_factory=list)

    def __post_init__(self):
        """Validate scalar fields."""
        if self.method not in METHODS:
            raise ContractViolationError(f"Unknown method '{self.method}', expected one of {METHODS}")
        if self.reconstruct_mode not in RECONSTRUCT_MODES:
            raise ContractViolationError(
                f"Unknown reconstruct mode '{self.reconstruct_mode}', expected one of {RECONSTRUCT_MODES}"
            )
        if self.hop is None:
            object.__setattr__(self, "hop", self.window_len // 2)

    def validate_segments(self, num_speakers: int) -> None:
        """Check that the segments required by the method are present.

        Args:
            num_speakers: Number of speakers to extract

        Raises:
            ContractViolationError: If a required segment is missing
        """
        if self.method == "direct":
            if len(self.undesired) != num_speakers:
                raise ContractViolationError(
                    f"Method 'direct' needs one undesired-only segment per speaker "
                    f"({num_speakers}), got {len(self.undesired)}"
                )
            return
        if self.noise_only is None:
            raise ContractViolationError(f"Method '{self.method}' needs a noise-only segment")
        if len(self.noise_plus) != num_speakers:
            raise ContractViolationError(
                f"Method '{self.method}' needs one noise-plus-speaker segment per speaker "
                f"({num_speakers}), got {len(self.noise_plus)}"
            )

    def with_manifest_segments(self, manifest: SimulationManifest) -> "PipelineConfig":
        """Fill missing calibration segments from a simulation manifest."""
        paths = manifest.calibration_paths
        n_speakers = len(manifest.speech_indices)
        noise_only = self.noise_only
        if noise_only is None and "noise_only" in paths:
            noise_only = SegmentSpec(str(manifest.resolve(paths["noise_only"])))
        noise_plus = self.noise_plus or [
            SegmentSpec(str(manifest.resolve(paths[f"noise_plus_{k}"])))
            for k in range(n_speakers)
            if f"noise_plus_{k}" in paths
        ]
        undesired = self.undesired or [
            SegmentSpec(str(manifest.resolve(paths[f"undesired_{k}"])))
            for k in range(n_speakers)
            if f"undesired_{k}" in paths
        ]
        return replace(self, noise_only=noise_only, noise_plus=noise_plus, undesired=undesired)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        """Create config from dictionary."""
        data = dict(data)
        if data.get("noise_only") is not None:
            data["noise_only"] = SegmentSpec.from_value(data["noise_only"])
        data["noise_plus"] = [SegmentSpec.from_value(v) for v in data.get("noise_plus", [])]
        data["undesired"] = [SegmentSpec.from_value(v) for v in data.get("undesired", [])]
        try:
            return cls(**data)
        except TypeError as e:
            raise InputError(f"Malformed pipeline config: {e}") from e

    @staticmethod
    def read_file(path: str) -> Dict[str, Any]:
        """Raw settings of a pipeline config JSON file (fields may be partial)."""
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise InputError(f"Cannot read pipeline config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise InputError(f"Pipeline config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise InputError(f"Pipeline config {path} must hold a JSON object")
        return data

    @classmethod
    def load(cls, path: str) -> "PipelineConfig":
        """Load a complete pipeline config JSON file."""
        return cls.from_dict(cls.read_file(path))
