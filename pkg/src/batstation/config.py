"""TOML/JSON run configuration mirroring the library's config dataclasses.

Recognised top-level tables: ``numerology``, ``reshape``, ``radar_types``
(an array of tables), ``dataset`` and ``training``. Anything else is an
error so that typos do not silently fall back to defaults.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dataset import SyntheticConfig
from .errors import ConfigError
from .grid import DEFAULT_NUMEROLOGY, NumerologyConfig
from .radar import DEFAULT_RADAR_TYPES, types_from_dicts
from .reshape import ReshapeConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

SECTIONS = ("numerology", "reshape", "radar_types", "dataset", "training")


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-3
    epochs: int = 200
    target_far: float = 0.05
    reference_snr_db: float = 30.0

    def __post_init__(self):
        if self.lr <= 0 or self.weight_decay < 0 or self.epochs < 1:
            raise ConfigError("training needs lr > 0, weight_decay >= 0 and epochs >= 1")
        if not 0 < self.target_far < 1:
            raise ConfigError("target_far must be in (0, 1)")


@dataclass(frozen=True)
class AppConfig:
    numerology: NumerologyConfig = DEFAULT_NUMEROLOGY
    reshape: ReshapeConfig = field(default_factory=ReshapeConfig)
    types: dict = field(default_factory=lambda: dict(DEFAULT_RADAR_TYPES))
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    @classmethod
    def from_mapping(cls, d: dict) -> "AppConfig":
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            numerology = NumerologyConfig.from_dict(_table(d, "numerology"))
            reshape = ReshapeConfig.from_dict(_table(d, "reshape"), numerology)
            types = types_from_dicts(d["radar_types"]) if "radar_types" in d else dict(DEFAULT_RADAR_TYPES)
            ds = _table(d, "dataset")
            synthetic = SyntheticConfig.from_dict({**ds, "numerology": numerology.to_dict(),
                                                   "types": [types[k].to_dict() for k in sorted(types)]})
            tr = _table(d, "training")
            bad = set(tr) - {f.name for f in fields(TrainingConfig)}
            if bad:
                raise ConfigError(f"unknown training keys: {sorted(bad)}")
            training = TrainingConfig(**tr)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc
        missing = set(types) - set(reshape.pool_sizes)
        if missing:
            raise ConfigError(f"no pool size for radar types {sorted(missing)}")
        return cls(numerology, reshape, types, synthetic, training)

    def with_training(self, **kw) -> "AppConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, training=replace(self.training, **kw)) if kw else self


def _table(d: dict, name: str) -> dict:
    t = d.get(name, {})
    if not isinstance(t, dict):
        raise ConfigError(f"[{name}] must be a table")
    return t


def load_config(path=None) -> AppConfig:
    """Read a ``.toml`` or ``.json`` file; ``None`` gives the defaults."""
    if path is None:
        return AppConfig()
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    return AppConfig.from_mapping(data)
