"""Run configuration: a TOML key/value file, environment, then command-line flags."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .error_analysis import DEFAULT_PRECEDENCE, ErrorRules
from .exceptions import InputError
from .matching import EMPTY_POLICIES
from .sweeps import DEFAULT_CONFIDENCE_GRID, DEFAULT_IOU_GRID

THREADS_ENV = "DENSEVAL_THREADS"
PATH_KEYS = ("manifest", "predictions", "out_dir", "profile")
# Keys that change how a run executes but never what it computes.
EXECUTION_KEYS = ("threads", "out_dir")
SYNTH_PROFILES = ("exact", "coarse", "dropout")


@dataclass
class RunConfig:
    manifest: str | None = None
    predictions: str | None = None
    split: str | None = None
    out_dir: str = "denseval_out"
    profile: str | None = None

    tau: float = 0.15
    theta: float = 0.35
    nms: bool = False
    tau_nms: float = 0.50
    empty_policy: str = "perfect"
    warnings_as_errors: bool = False

    axis: str = "iou"
    iou_grid: list = field(default_factory=lambda: list(DEFAULT_IOU_GRID))
    conf_grid: list = field(default_factory=lambda: list(DEFAULT_CONFIDENCE_GRID))

    alpha: float = 0.001
    class_id: int = 0

    contrast: bool = True
    boundary_margin: float = 50.0
    contrast_cutoff: float = 30.0
    contrast_pad: int = 25
    clutter_radius: float = 100.0
    occlusion_radius: float = 200.0
    occlusion_min: int = 5
    precedence: list = field(default_factory=lambda: list(DEFAULT_PRECEDENCE))

    threads: int = 1
    seed: int = 0

    synth_images: int = 20
    synth_instances: int = 40
    synth_width: int = 1280
    synth_height: int = 960
    synth_profile: str = "exact"
    synth_dropout: float = 0.5
    synth_iou_low: float = 0.35
    synth_iou_high: float = 0.65
    synth_min_diameter: int = 30
    synth_max_diameter: int = 60
    synth_false_positives: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise InputError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0.0 <= self.theta <= 1.0:
            raise InputError(f"theta must lie in [0, 1], got {self.theta}")
        if not 0.0 < self.tau_nms <= 1.0:
            raise InputError(f"tau_nms must lie in (0, 1], got {self.tau_nms}")
        if self.alpha < 0:
            raise InputError("alpha must be >= 0")
        if self.axis not in ("iou", "confidence"):
            raise InputError("axis must be 'iou' or 'confidence'")
        if self.empty_policy not in EMPTY_POLICIES:
            raise InputError(f"empty_policy must be one of {EMPTY_POLICIES}")
        if self.synth_profile not in SYNTH_PROFILES:
            raise InputError(f"synth_profile must be one of {SYNTH_PROFILES}")
        if not 0.0 <= self.synth_dropout <= 1.0:
            raise InputError("synth_dropout must lie in [0, 1]")
        if not 0.0 < self.synth_iou_low <= self.synth_iou_high < 1.0:
            raise InputError("synthetic IoU range must satisfy 0 < low <= high < 1")
        if self.threads < 1:
            raise InputError("threads must be >= 1")
        self.error_rules()

    def error_rules(self) -> ErrorRules:
        return ErrorRules(self.boundary_margin, self.contrast_cutoff if self.contrast else None,
                          self.contrast_pad, self.clutter_radius, self.occlusion_radius,
                          self.occlusion_min, tuple(self.precedence))

    def echo(self) -> dict:
        """Serializable config without execution-only keys."""
        d = dataclasses.asdict(self)
        for k in EXECUTION_KEYS:
            d.pop(k)
        return d

    @classmethod
    def load(cls, path: str | os.PathLike | None = None, overrides: dict | None = None,
             environ: dict | None = None) -> "RunConfig":
        """File values < ``DENSEVAL_THREADS`` < explicit overrides.

        Relative paths in the file resolve against the file's directory.
        """
        values: dict = {}
        if path is not None:
            path = Path(path)
            try:
                raw = tomllib.loads(path.read_text())
            except (OSError, tomllib.TOMLDecodeError) as exc:
                raise InputError(f"{path}: cannot read config ({exc})") from exc
            for k, v in raw.items():
                if k in PATH_KEYS and isinstance(v, str) and not Path(v).is_absolute():
                    v = str(path.parent / v)
                values[k] = v
        env = os.environ if environ is None else environ
        if env.get(THREADS_ENV):
            values["threads"] = env[THREADS_ENV]
        values.update(overrides or {})
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise InputError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**{k: coerce(known[k], v) for k, v in values.items()})


def coerce(f: dataclasses.Field, value):
    """Convert a file or command-line value to the field's type."""
    default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
    if value is None:
        return None
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, list):
            items = value if isinstance(value, list) else [s for s in str(value).split(",") if s.strip()]
            if default and isinstance(default[0], str):
                return [str(s).strip() for s in items]
            return [float(s) for s in items]
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise InputError(f"invalid value {value!r} for config key {f.name!r}") from None
