"""Run configuration: profiles, YAML files, dotted-key overrides, provenance hash."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import asdict, dataclass, field

import yaml

from .contour_completion import ContourLossConfig
from .datakit import BrushConfig, SceneConfig
from .errors import ConfigError

CONFIG_ENV = "FGINPAINT_CONFIG"
PROFILES = ("desk", "paper")


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str = "data"
    ckpt_dir: str = "checkpoints"
    report_dir: str = "reports"


@dataclass(frozen=True)
class DataConfig:
    n_images: int = 500
    n_test: int = 100
    sobel_threshold: float = 1.0
    non_overlap_prob: float = 0.5


@dataclass(frozen=True)
class ModelConfig:
    width: float = 0.25
    softmax_scale: float = 10.0
    disc_base_channels: int = 64
    disc_layers: int = 4


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 8

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass(frozen=True)
class ScheduleConfig:
    stage_boundaries: tuple[int, int] = (3000, 6000)
    total_steps: int = 10000

    def validate(self):
        a, b = self.stage_boundaries
        if not 0 <= a <= b:
            raise ConfigError("stage boundaries must satisfy 0 <= first <= second")


@dataclass(frozen=True)
class CleanupSettings:
    min_component_frac: float = 0.001
    connectivity: int = 8


@dataclass(frozen=True)
class RunConfig:
    profile: str = "desk"
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    brush: BrushConfig = field(default_factory=BrushConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    contour_loss: ContourLossConfig = field(default_factory=ContourLossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    cleanup: CleanupSettings = field(default_factory=CleanupSettings)
    deterministic: bool = True

    def validate(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        self.scene.validate()
        self.brush.validate()
        self.contour_loss.validate()
        self.optim.validate()
        self.schedule.validate()
        if self.cleanup.connectivity not in (4, 8):
            raise ConfigError("cleanup.connectivity must be 4 or 8")
        return self

    def to_dict(self):
        return asdict(self)

    def hash(self):
        return config_hash(self)


PROFILE_OVERRIDES = {
    "desk": {},
    "paper": {
        "scene": {"canvas_size": 256},
        "data": {"n_images": 12609, "n_test": 500},
        "model": {"width": 1.0},
        "optim": {"batch_size": 64},
        "schedule": {"stage_boundaries": [100000, 200000], "total_steps": 300000},
    },
}


def _coerce(tp, value, where):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping")
        return _build(tp, value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        args = typing.get_args(tp)
        inner = args[0]
        return tuple(_coerce(inner, v, where) for v in value)
    if origin is typing.Union or tp is typing.Any:
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is str:
        return str(value)
    return value


def _build(cls, values, where=""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys at '{where or 'root'}': {sorted(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}" if where else k) for k, v in values.items()}
    return cls(**kwargs)


def _merge(base, extra):
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def from_dict(values) -> RunConfig:
    return _build(RunConfig, values).validate()


def parse_overrides(pairs):
    """``["optim.batch_size=4", ...]`` -> nested dict with YAML-parsed values."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def load_config(path=None, profile=None, overrides=None) -> RunConfig:
    """Resolve profile defaults, then the YAML file, then explicit overrides.

    ``path`` defaults to ``$FGINPAINT_CONFIG`` when set.
    """
    path = path or os.environ.get(CONFIG_ENV)
    file_values = {}
    if path:
        with open(path) as fh:
            file_values = yaml.safe_load(fh) or {}
        if not isinstance(file_values, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    overrides = overrides or {}
    chosen = overrides.get("profile") or profile or file_values.get("profile") or "desk"
    if chosen not in PROFILES:
        raise ConfigError(f"unknown profile {chosen!r}; choose from {PROFILES}")
    values = asdict(RunConfig())
    values = _merge(values, PROFILE_OVERRIDES[chosen])
    values = _merge(values, file_values)
    values = _merge(values, overrides)
    values["profile"] = chosen
    return from_dict(values)


def config_hash(cfg: RunConfig) -> str:
    """Short SHA-256 over everything except filesystem paths."""
    d = asdict(cfg)
    d.pop("paths", None)
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def dump_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(json.loads(json.dumps(asdict(cfg))), fh, sort_keys=True)
