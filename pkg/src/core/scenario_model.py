"""Scenario model for simulated rooms, sources and microphone groups."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from src.core.exceptions import ContractViolationError, InputError

SOURCE_KINDS = ("speech", "noise")

Position = Tuple[float, float, float]


@dataclass(frozen=True)
class Room:
    """Shoebox room with uniform wall absorption."""

    dimensions: Position
    t60: float
    speed_of_sound: float = 343.0
    max_reflection_order: int = -1  # -1: limited by RIR length only
    image_jitter: float = 0.0  # meters, 0 for the classical image method

    def __post_init__(self):
        """Validate geometry."""
        object.__setattr__(self, "dimensions", tuple(float(v) for v in self.dimensions))
        if len(self.dimensions) != 3 or any(v <= 0 for v in self.dimensions):
            raise ContractViolationError(f"Room dimensions must be 3 positive values, got {self.dimensions}")
        if self.t60 < 0:
            raise ContractViolationError(f"t60 must be >= 0, got {self.t60}")
        if self.speed_of_sound <= 0:
            raise ContractViolationError("speed_of_sound must be positive")
        if self.image_jitter < 0:
            raise ContractViolationError("image_jitter must be >= 0")

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def contains(self, position: Position) -> bool:
        """True when the position lies strictly inside the room."""
        return all(0.0 < p < d for p, d in zip(position, self.dimensions))


@dataclass(frozen=True)
class SourceSpec:
    """A point source: a talker or a background-noise emitter."""

    kind: str
    signal_path: str
    position: Optional[Position] = None
    label: str = ""

    def __post_init__(self):
        """Validate kind and normalize position."""
        if self.kind not in SOURCE_KINDS:
            raise ContractViolationError(f"Source kind must be one of {SOURCE_KINDS}, got '{self.kind}'")
        if self.position is not None:
            object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass(frozen=True)
class Scenario:
    """Complete description of a simulated recording session."""

    scenario_id: str
    room: Room
    sources: Tuple[SourceSpec, ...]
    microphones: Tuple[Position, ...]
    group_a: Tuple[int, ...]
    group_b: Tuple[int, ...]
    snr_db: float = 0.0
    sensor_noise_snr_db: Optional[float] = 40.0
    sample_rate: int = 16000
    seed: int = 0
    duration_s: float = 20.0
    calibration_duration_s: float = 60.0
    mic_count: int = 0  # requested count when positions are drawn at random
    layout_margin: float = 0.5
    layout_min_distance: float = 0.5
    base_dir: str = field(default=".", compare=False)

    @property
    def speech_indices(self) -> List[int]:
        return [i for i, s in enumerate(self.sources) if s.kind == "speech"]

    @property
    def noise_indices(self) -> List[int]:
        return [i for i, s in enumerate(self.sources) if s.kind == "noise"]

    @property
    def num_mics(self) -> int:
        return len(self.microphones) if self.microphones else self.mic_count

    @property
    def reference_mic(self) -> int:
        """First microphone of group A, the scored channel."""
        return self.group_a[0]

    @property
    def is_placed(self) -> bool:
        """True when every source and microphone has a position."""
        return bool(self.microphones) and all(s.position is not None for s in self.sources)

    def with_snr(self, snr_db: float) -> "Scenario":
        return replace(self, snr_db=float(snr_db))

    def resolve_signal_path(self, source: SourceSpec) -> Path:
        """Resolve a source's signal path against the scenario file directory."""
        path = Path(source.signal_path)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def validate(self) -> None:
        """Check the scenario invariants.

        Raises:
            ContractViolationError: If any invariant is broken
        """
        if not self.sources:
            raise ContractViolationError(f"Scenario '{self.scenario_id}' has no sources")
        if not self.speech_indices:
            raise ContractViolationError(f"Scenario '{self.scenario_id}' has no speech sources")
        n_mics = self.num_mics
        a, b = set(self.group_a), set(self.group_b)
        if not a or not b:
            raise ContractViolationError("Both microphone groups must be nonempty")
        if a & b:
            raise ContractViolationError(f"Microphone groups overlap at {sorted(a & b)}")
        if a | b != set(range(n_mics)):
            raise ContractViolationError(
                f"Groups A and B must cover microphones 0..{n_mics - 1} exactly"
            )
        # every separation target leaves len(sources) - 1 undesired sources to invert
        if len(self.group_b) < len(self.sources) - 1:
            raise ContractViolationError(
                f"Group B has {len(self.group_b)} microphones but {len(self.sources) - 1} "
                "undesired sources must be represented"
            )
        if self.sample_rate <= 0 or self.duration_s <= 0 or self.calibration_duration_s <= 0:
            raise ContractViolationError("sample_rate and durations must be positive")
        if self.is_placed:
            for i, source in enumerate(self.sources):
                if not self.room.contains(source.position):
                    raise ContractViolationError(f"Source {i} at {source.position} is outside the room")
            for q, mic in enumerate(self.microphones):
                if not self.room.contains(mic):
                    raise ContractViolationError(f"Microphone {q} at {mic} is outside the room")

    def fingerprint(self) -> str:
        """Short stable hash of the scenario contents."""
        digest = hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()
        return digest[:16]

    def to_dict(self) -> Dict[str, Any]:
        """Convert scenario to a JSON-ready dictionary."""
        data = asdict(self)
        data.pop("base_dir")
        data["microphones"] = [list(m) for m in self.microphones] or {"count": self.mic_count}
        data.pop("mic_count")
        data["layout"] = {"margin": data.pop("layout_margin"), "min_distance": data.pop("layout_min_distance")}
        data["room"]["dimensions"] = list(self.room.dimensions)
        data["group_a"] = list(self.group_a)
        data["group_b"] = list(self.group_b)
        data["sources"] = [
            {**asdict(s), "position": list(s.position) if s.position is not None else None}
            for s in self.sources
        ]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: str = ".") -> "Scenario":
        """Create scenario from dictionary."""
        try:
            mics = data["microphones"]
            if isinstance(mics, dict):
                microphones, mic_count = (), int(mics["count"])
            else:
                microphones, mic_count = tuple(tuple(m) for m in mics), len(mics)
            layout = data.get("layout", {})
            return cls(
                scenario_id=data["scenario_id"],
                room=Room(**data["room"]),
                sources=tuple(SourceSpec(**s) for s in data["sources"]),
                microphones=microphones,
                group_a=tuple(data["group_a"]),
                group_b=tuple(data["group_b"]),
                snr_db=float(data.get("snr_db", 0.0)),
                sensor_noise_snr_db=data.get("sensor_noise_snr_db", 40.0),
                sample_rate=int(data.get("sample_rate", 16000)),
                seed=int(data.get("seed", 0)),
                duration_s=float(data.get("duration_s", 20.0)),
                calibration_duration_s=float(data.get("calibration_duration_s", 60.0)),
                mic_count=mic_count,
                layout_margin=float(layout.get("margin", 0.5)),
                layout_min_distance=float(layout.get("min_distance", 0.5)),
                base_dir=base_dir,
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed scenario: {e}") from e

    def to_json(self) -> str:
        """Convert scenario to JSON string."""
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, json_str: str, base_dir: str = ".") -> "Scenario":
        """Create scenario from JSON string."""
        return cls.from_dict(json.loads(json_str), base_dir=base_dir)

    @classmethod
    def load(cls, path: str) -> "Scenario":
        """Load a scenario file.

        Args:
            path: Path to the scenario JSON file

        Returns:
            Scenario with signal paths resolved against the file's directory

        Raises:
            InputError: If the file is missing or not valid JSON
        """
        scenario_file = Path(path)
        try:
            text = scenario_file.read_text()
        except OSError as e:
            raise InputError(f"Cannot read scenario file {scenario_file}: {e}") from e
        try:
            return cls.from_json(text, base_dir=str(scenario_file.parent.absolute()))
        except json.JSONDecodeError as e:
            raise InputError(f"Scenario file {scenario_file} is not valid JSON: {e}") from e
