"""Run configuration: one YAML or JSON file, overridable with ``section.key=value`` pairs.

Schema (every key optional; defaults shown)::

    run_id: default            # results live in <runs_dir>/<run_id>/
    runs_dir: runs
    seed: 0                    # image-generation seed
    data:
      db_manifest: fixtures/corpus/db_manifest.jsonl
      train_manifest: fixtures/corpus/train_manifest.jsonl
      visual_elements: null    # null = shipped per-country table
      check_images: true
    encoders: {text_dim: 16, image_dim: 16, image_grid: 2, seed: 0, per_component: false}
    backbone:
      checkpoint: null         # null = pretrain a toy backbone into <run>/backbone.npz
      pretrain_steps: 1500
      pretrain_lr: 0.003
      seed: 0
    schedule: {b1: 0.3333333333333333, b2: 0.6666666666666666, total_steps: 30}
    train: {learning_rate: 1.0e-05, batch_size: 1, grad_accum: 4, steps: 500, seed: 0, smoothing_window: 25}
    eval:
      statements: null         # null = shipped 100-statement set
      countries: [China, France, South Africa, United Arab Emirates, Mexico]
      limit: null              # evaluate only the first N statements
      variants: [none, no_cultural, early, late, no_style, multi_style, culgen]
      scorer: toy              # toy | constant
      workers: 1

Relative paths resolve against the working directory. Client credentials are never
part of the config; they come from the environment.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .backbone import DenoiserConfig
from .errors import ConfigurationError
from .evaluation import EVAL_COUNTRIES
from .pipeline import EncoderConfig
from .scheduler import ABLATIONS, ScheduleConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    db_manifest: str = "fixtures/corpus/db_manifest.jsonl"
    train_manifest: str = "fixtures/corpus/train_manifest.jsonl"
    visual_elements: str | None = None
    check_images: bool = True


@dataclass(frozen=True)
class BackboneConfig:
    checkpoint: str | None = None
    pretrain_steps: int = 1500
    pretrain_lr: float = 3e-3
    seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    statements: str | None = None
    countries: tuple = EVAL_COUNTRIES
    limit: int | None = None
    variants: tuple = ("none", "no_cultural", "early", "late", "no_style", "multi_style", "culgen")
    scorer: str = "toy"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "variants", tuple(self.variants))
        unknown = [v for v in self.variants if v not in ABLATIONS]
        if unknown:
            raise ConfigurationError(f"eval.variants: unknown variants {unknown}")
        if self.scorer not in ("toy", "constant"):
            raise ConfigurationError(f"eval.scorer must be 'toy' or 'constant', not {self.scorer!r}")
        if self.limit is not None and self.limit < 1:
            raise ConfigurationError("eval.limit must be a positive integer")


SECTIONS = {
    "data": DataConfig,
    "encoders": EncoderConfig,
    "backbone": BackboneConfig,
    "denoiser": DenoiserConfig,
    "schedule": ScheduleConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}


@dataclass(frozen=True)
class RunConfig:
    run_id: str = "default"
    runs_dir: str = "runs"
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    encoders: EncoderConfig = field(default_factory=EncoderConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def run_dir(self) -> Path:
        return Path(self.runs_dir) / self.run_id

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigurationError(f"{where}: expected a mapping, got {type(values).__name__}")
    types = {f.name: str(f.type) for f in fields(cls)}
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}; expected some of {sorted(types)}")
    values = dict(values)
    for key, value in values.items():
        # YAML 1.1 reads "1e-5" as a string
        if isinstance(value, str) and types[key].startswith("float"):
            try:
                values[key] = float(value)
            except ValueError:
                raise ConfigurationError(f"{where}.{key}: expected a number, got {value!r}") from None
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    top = {}
    for key, value in raw.items():
        if key in SECTIONS:
            top[key] = _build(SECTIONS[key], value or {}, key)
        else:
            top[key] = value
    cfg = _build(RunConfig, top, "config")
    if cfg.denoiser.cond_dim != cfg.encoders.text_dim:
        raise ConfigurationError(
            f"denoiser.cond_dim ({cfg.denoiser.cond_dim}) must equal encoders.text_dim ({cfg.encoders.text_dim})")
    return cfg


def _set_path(d: dict, dotted: str, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ConfigurationError(f"override {dotted!r}: {k!r} is not a section")
    d[keys[-1]] = value


def parse_override(item: str) -> tuple:
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} must look like section.key=value")
    key, _, text = item.partition("=")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"override {item!r}: {exc}") from exc
    return key.strip(), value


def load_config(path=None, overrides=()) -> RunConfig:
    raw: dict = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = (json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)) or {}
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
    for item in overrides:
        key, value = parse_override(item)
        _set_path(raw, key, value)
    return from_dict(raw)


def with_updates(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
