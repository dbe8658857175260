"""Run records and the nested pipeline configuration.

Every command writes exactly one RunRecord into its output directory: the
resolved configuration, input checksums, tool version, and timestamps needed
to replay the command. The configuration file is strict JSON; unknown keys
are rejected rather than ignored.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError
from .evaluation import DEFAULT_CURVE, DEFAULT_IOU_THRESHOLD
from .positivity import PositivityThresholds
from .segmentation import ClassicalParams
from .translation import TranslationConfig

RUN_RECORD_NAME = "run_record.json"


@dataclass(frozen=True)
class EvaluationConfig:
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    curve_start: float = DEFAULT_CURVE[0]
    curve_stop: float = DEFAULT_CURVE[1]
    curve_step: float = DEFAULT_CURVE[2]

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class SegmentationConfig:
    backend: str = "classical"
    classical: ClassicalParams = field(default_factory=ClassicalParams)
    exchange_command: str = ""
    exchange_timeout: float = 600.0


@dataclass(frozen=True)
class PipelineConfig:
    translation: TranslationConfig = field(default_factory=TranslationConfig)
    segmentation: SegmentationConfig = \
        field(default_factory=SegmentationConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    positivity: PositivityThresholds = \
        field(default_factory=PositivityThresholds)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        section_types = {
            "translation": TranslationConfig,
            "segmentation": SegmentationConfig,
            "evaluation": EvaluationConfig,
            "positivity": PositivityThresholds,
            "classical": ClassicalParams,
        }

        def build(dc_type, values, context):
            known = {f.name for f in fields(dc_type)}
            unknown = set(values) - known
            if unknown:
                raise ConfigError(
                    f"unknown config keys under {context!r}: "
                    f"{sorted(unknown)}")
            kwargs = {}
            for name, value in values.items():
                if isinstance(value, dict):
                    if name not in section_types:
                        raise ConfigError(
                            f"{context}.{name} does not take a nested object")
                    kwargs[name] = build(section_types[name], value,
                                         f"{context}.{name}")
                else:
                    kwargs[name] = value
            try:
                return dc_type(**kwargs)
            except (TypeError, ValueError) as exc:
                raise ConfigError(
                    f"invalid values under {context!r}: {exc}") from exc

        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        return build(cls, data, "config")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: "
                              f"{exc}") from exc
        return cls.from_dict(data)


def make_run_id(config: dict, now: datetime | None = None) -> str:
    """Sortable, collision-resistant id: timestamp plus config digest."""
    now = now or datetime.now(timezone.utc)
    digest = hashlib.sha256(
        json.dumps(config, sort_keys=True, default=str).encode()
    ).hexdigest()[:8]
    return now.strftime("%Y%m%dT%H%M%S") + "-" + digest


@dataclass
class RunRecord:
    run_id: str
    command: list[str]
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    started: str = ""
    finished: str = ""

    def save(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / RUN_RECORD_NAME
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, out_dir) -> "RunRecord":
        path = Path(out_dir) / RUN_RECORD_NAME
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read run record {path}: {exc}") from exc
        return cls(**data)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
