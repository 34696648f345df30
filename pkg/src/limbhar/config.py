"""Run configuration: one YAML file describing a whole experiment sweep.

Every section is optional and fully defaulted::

    data:      {path, modalities, activities, channels}
    synth:     SynthConfig fields (used when data.path is unset)
    features:  FeatureConfig fields
    models:    list of ModelSpec fields; each entry needs ``kind``
    train:     TrainConfig fields
    folds:     {k, n_val, seed}
    output:    {dir}

Unknown keys anywhere are rejected, naming the offending key and the keys
that are allowed there.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .dataset import SynthConfig
from .errors import ConfigError, ContractError
from .features import FeatureConfig
from .models import ArchKind, ModelSpec
from .records import MODALITIES
from .training import TrainConfig

SECTIONS = ("data", "synth", "features", "models", "train", "folds", "output")
_TUPLE_FIELDS = {"frequencies", "amplitudes", "amplitude_range", "widths", "kernel_widths", "input_shape"}


@dataclass(frozen=True)
class DataConfig:
    path: Optional[str] = None
    modalities: tuple = MODALITIES
    activities: Optional[tuple] = None
    channels: Optional[tuple] = None


@dataclass(frozen=True)
class FoldConfig:
    k: int = 4
    n_val: int = 2
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = DataConfig()
    synth: SynthConfig = SynthConfig()
    features: FeatureConfig = FeatureConfig()
    models: tuple = field(default_factory=lambda: tuple(ModelSpec(k) for k in ArchKind))
    train: TrainConfig = TrainConfig()
    folds: FoldConfig = FoldConfig()
    output_dir: str = "reports"

    def to_dict(self) -> dict:
        return {
            "data": _plain(dataclasses.asdict(self.data)),
            "synth": _plain(dataclasses.asdict(self.synth)),
            "features": dataclasses.asdict(self.features),
            "models": [m.to_dict() for m in self.models],
            "train": dataclasses.asdict(self.train),
            "folds": dataclasses.asdict(self.folds),
            "output": {"dir": self.output_dir},
        }


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _build(cls, raw, where: str, **extra):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    names = [f.name for f in dataclasses.fields(cls)]
    for key in raw:
        if key not in names:
            raise ConfigError(f"{where}.{key}: unknown key (allowed: {', '.join(names)})")
    kwargs = {k: _tupled(v) if k in _TUPLE_FIELDS or isinstance(v, list) else v for k, v in raw.items()}
    kwargs.update(extra)
    types = {f.name: f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type)) for f in dataclasses.fields(cls)}
    for key, val in list(kwargs.items()):
        want = types[key]
        if want == "float" and isinstance(val, str):
            # YAML 1.1 reads exponent literals without a dot, such as 1e-3, as strings
            try:
                val = kwargs[key] = float(val)
            except ValueError:
                raise ConfigError(f"{where}.{key}: expected a number, got {val!r}") from None
        if want in ("int", "float") and (isinstance(val, bool) or not isinstance(val, (int, float))):
            raise ConfigError(f"{where}.{key}: expected a number, got {val!r}")
        if want == "int" and isinstance(val, float):
            raise ConfigError(f"{where}.{key}: expected an integer, got {val!r}")
        if want == "bool" and not isinstance(val, bool):
            raise ConfigError(f"{where}.{key}: expected true or false, got {val!r}")
        if want == "str" and not isinstance(val, str):
            raise ConfigError(f"{where}.{key}: expected a string, got {val!r}")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ContractError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(raw: Optional[dict]) -> RunConfig:
    """Validate an already-parsed mapping into a :class:`RunConfig`."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(f"{key}: unknown section (allowed: {', '.join(SECTIONS)})")
    data = _build(DataConfig, raw.get("data"), "data")
    for m in data.modalities:
        if m not in MODALITIES:
            raise ConfigError(f"data.modalities: {m!r} is not one of {MODALITIES}")
    if not data.modalities or len(set(data.modalities)) != len(data.modalities):
        raise ConfigError("data.modalities: need one or more distinct modalities")
    models_raw = raw.get("models")
    if models_raw is None:
        models = RunConfig().models
    else:
        if not isinstance(models_raw, list) or not models_raw:
            raise ConfigError("models: expected a non-empty list of model entries")
        models = []
        for i, entry in enumerate(models_raw):
            if not isinstance(entry, dict) or "kind" not in entry:
                raise ConfigError(f"models[{i}]: each entry needs a 'kind' ({', '.join(k.value for k in ArchKind)})")
            models.append(_build(ModelSpec, entry, f"models[{i}]"))
        models = tuple(models)
    output = raw.get("output") or {}
    if not isinstance(output, dict) or set(output) - {"dir"}:
        raise ConfigError("output: only the key 'dir' is allowed")
    return RunConfig(
        data=data,
        synth=_build(SynthConfig, raw.get("synth"), "synth"),
        features=_build(FeatureConfig, raw.get("features"), "features"),
        models=models,
        train=_build(TrainConfig, raw.get("train"), "train"),
        folds=_build(FoldConfig, raw.get("folds"), "folds"),
        output_dir=str(output.get("dir", "reports")),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
