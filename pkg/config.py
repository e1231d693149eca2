"""Run configuration: environment settings plus a JSON config file overridden by flags."""

from dataclasses import dataclass
import json
import logging
import math
import os
from typing import Optional, Tuple

from models.anchor_models import DEFAULT_STRIDES, PyramidConfig, parse_aspect_ratio
from models.assignment_models import AssignConfig, AtssConfig, IouAssignConfig, ScaleRangeConfig
from models.dataset_models import ResizePolicy
from sampling.errors import ConfigError
from sampling.synth import SyntheticSpec

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("json", "csv", "txt")

# Config-file keys mirror the flag names
CONFIG_KEYS = (
    "dataset", "synthetic", "strategy", "k", "theta_p", "theta_n", "force_best_match",
    "scale_ranges", "anchor_scale", "aspect_ratios", "scales_per_octave", "strides",
    "resize", "out", "format", "seed", "workers",
)


@dataclass(frozen=True)
class Settings:
    log_level: str = "INFO"
    workers: int = 1
    ledger_url: Optional[str] = None
    ledger_tz: str = "UTC"

    @classmethod
    def from_env(cls):
        raw_workers = os.getenv("ASSIGN_WORKERS", "1")
        try:
            workers = int(raw_workers)
        except ValueError:
            raise ConfigError("ASSIGN_WORKERS", f"must be an integer, got '{raw_workers}'")
        return cls(
            log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
            workers=workers,
            ledger_url=os.getenv("LEDGER_URL") or None,
            ledger_tz=os.getenv("LEDGER_TZ", "UTC"),
        )


def _split(value):
    if isinstance(value, (list, tuple)):
        return [str(v).strip() for v in value]
    return [part.strip() for part in str(value).split(",") if part.strip()]


def parse_float_list(value, field):
    """'0,64,128,inf' or a JSON list -> tuple of floats ('inf' allowed)."""
    out = []
    for item in _split(value):
        try:
            out.append(float(item))
        except ValueError:
            raise ConfigError(field, f"cannot parse number '{item}'")
        if math.isnan(out[-1]):
            raise ConfigError(field, "NaN is not allowed")
    if not out:
        raise ConfigError(field, "at least one value is required")
    return tuple(out)


def parse_formats(value):
    formats = tuple(f.lower() for f in _split(value))
    unknown = [f for f in formats if f not in OUTPUT_FORMATS]
    if unknown or not formats:
        raise ConfigError("format", f"expected a comma list of {', '.join(OUTPUT_FORMATS)}, got '{value}'")
    return tuple(f for f in OUTPUT_FORMATS if f in formats)


def _as_int(value, field):
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"must be an integer, got '{value}'")
    if not number.is_integer():
        raise ConfigError(field, f"must be an integer, got '{value}'")
    return int(number)


def _as_float(value, field):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"must be a number, got '{value}'")


def _as_bool(value, field):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ConfigError(field, f"must be true or false, got '{value}'")


def load_config_file(path):
    """Read a JSON run config; its keys mirror the command-line flags."""
    if not os.path.exists(path):
        raise ConfigError("config", f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"malformed JSON in {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must hold a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError("config", f"unknown keys in {path}: {', '.join(unknown)}")
    logger.info(f"Loaded run config from {path}")
    return data


def merge_values(file_values, flag_values):
    """Flags win over the config file; a flag left at None does not override."""
    merged = dict(file_values or {})
    merged.update({key: value for key, value in (flag_values or {}).items() if value is not None})
    return merged


@dataclass(frozen=True)
class RunConfig:
    dataset: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    pyramid: PyramidConfig = PyramidConfig()
    assign: AssignConfig = AssignConfig()
    resize: ResizePolicy = ResizePolicy()
    out: str = "out"
    formats: Tuple[str, ...] = OUTPUT_FORMATS
    seed: int = 0
    workers: int = 1

    def validate(self, require_source=True):
        if require_source and (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("dataset", "exactly one of --dataset and --synthetic is required")
        if self.synthetic is not None:
            self.synthetic.validate()
        self.pyramid.validate()
        self.assign.validate(self.pyramid.num_levels)
        self.resize.validate()
        if self.workers < 1:
            raise ConfigError("workers", f"must be >= 1, got {self.workers}")
        if not self.formats:
            raise ConfigError("format", "at least one output format is required")

    def source(self):
        if self.synthetic is not None:
            return {"synthetic": self.synthetic.to_dict()}
        return {"dataset": self.dataset}

    def to_dict(self):
        """Everything that determines the output bytes (not workers, not the output path)."""
        return {
            "source": self.source(),
            "pyramid": self.pyramid.to_dict(),
            "assign": self.assign.to_dict(),
            "resize": {"shorter_side": self.resize.shorter_side, "max_longer_side": self.resize.max_longer_side},
            "seed": self.seed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def build_run_config(values, settings: Settings = Settings(), require_source=True) -> RunConfig:
    """Assemble and validate a RunConfig from merged file/flag values."""
    seed = _as_int(values.get("seed", 0), "seed")

    synthetic = values.get("synthetic")
    if isinstance(synthetic, dict):
        synthetic = ",".join(f"{k}={v}" for k, v in synthetic.items())
    synthetic = SyntheticSpec.parse(synthetic, default_seed=seed) if synthetic is not None else None

    strides = DEFAULT_STRIDES
    if values.get("strides") is not None:
        strides = parse_float_list(values["strides"], "strides")
    ratios = (1.0,)
    if values.get("aspect_ratios") is not None:
        ratios = tuple(parse_aspect_ratio(r) for r in _split(values["aspect_ratios"]))
    pyramid = PyramidConfig.default(
        strides=strides,
        scale_multiplier=_as_float(values.get("anchor_scale", 8.0), "anchor_scale"),
        aspect_ratios=ratios,
        scales_per_octave=_as_int(values.get("scales_per_octave", 1), "scales_per_octave"),
    )

    scale_ranges = ScaleRangeConfig()
    if values.get("scale_ranges") is not None:
        scale_ranges = ScaleRangeConfig(parse_float_list(values["scale_ranges"], "scale_ranges"))
    assign = AssignConfig(
        strategy=str(values.get("strategy", "atss")),
        atss=AtssConfig(k=_as_int(values.get("k", 9), "k")),
        iou=IouAssignConfig(
            theta_p=_as_float(values.get("theta_p", 0.5), "theta_p"),
            theta_n=_as_float(values.get("theta_n", 0.4), "theta_n"),
            force_best_match=_as_bool(values.get("force_best_match", True), "force_best_match"),
        ),
        scale_ranges=scale_ranges,
    )

    resize = values.get("resize") or {}
    if isinstance(resize, (list, tuple)):
        if len(resize) != 2:
            raise ConfigError("resize", f"expected [shorter_side, max_longer_side], got {resize}")
        resize = {"shorter_side": resize[0], "max_longer_side": resize[1]}
    if not isinstance(resize, dict):
        raise ConfigError("resize", f"expected an object or a two-item list, got {resize}")
    resize = dict(resize)
    # --resize-shorter / --resize-longer
    if values.get("resize_shorter") is not None:
        resize["shorter_side"] = values["resize_shorter"]
    if values.get("resize_longer") is not None:
        resize["max_longer_side"] = values["resize_longer"]
    policy = ResizePolicy(
        shorter_side=_as_int(resize.get("shorter_side", 800), "resize"),
        max_longer_side=_as_int(resize.get("max_longer_side", 1333), "resize"),
    )

    config = RunConfig(
        dataset=str(values["dataset"]) if values.get("dataset") is not None else None,
        synthetic=synthetic,
        pyramid=pyramid,
        assign=assign,
        resize=policy,
        out=str(values.get("out", "out")),
        formats=parse_formats(values.get("format", ",".join(OUTPUT_FORMATS))),
        seed=seed,
        workers=_as_int(values.get("workers", settings.workers), "workers"),
    )
    config.validate(require_source=require_source)
    return config
