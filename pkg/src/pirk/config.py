"""Experiment configuration: JSON sections mapped onto the module configs.

Unknown keys anywhere in the file are rejected; missing keys fall back to
the documented defaults, so a minimal config is `{}`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidArgumentError
from .fusion import FusionConfig
from .girl import GirlConfig
from .model import Toggles
from .spectral import SpectralConfig
from .temporal import TemporalConfig


@dataclass(frozen=True)
class DatasetConfig:
    n_actions: int = 6
    n_bodies: int = 3
    n_persons: int = 12
    holdout_persons: int = 4
    clips_per_pair: int = 4
    T: int = 8
    C: int = 3
    H: int = 8
    W: int = 8
    amplitude_range: tuple = (0.5, 2.0)
    tempo_range: tuple = (0.5, 2.0)
    tilt_range: tuple = (0.0, 1.0)
    noise_sigma_range: tuple = (0.02, 0.08)
    seed: int = 0

    @property
    def dims(self):
        return (self.T, self.C, self.H, self.W)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    steps: int = 2000
    batch_size: int = 16

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise InvalidArgumentError("bad optimizer settings")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = DatasetConfig()
    spectral: SpectralConfig = SpectralConfig()
    temporal: TemporalConfig = TemporalConfig()
    fusion: FusionConfig = FusionConfig()
    girl: GirlConfig = GirlConfig()
    toggles: Toggles = Toggles()
    optimizer: OptimizerConfig = OptimizerConfig()


_SECTIONS = {
    "dataset": DatasetConfig,
    "spectral": SpectralConfig,
    "temporal": TemporalConfig,
    "fusion": FusionConfig,
    "girl": GirlConfig,
    "toggles": Toggles,
    "optimizer": OptimizerConfig,
}


def _build_section(cls, data: dict, section: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise InvalidArgumentError(
            f"unknown key(s) {sorted(unknown)} in section '{section}'"
        )
    coerced = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    return cls(**coerced)


def config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise InvalidArgumentError(f"unknown top-level key(s) {sorted(unknown)}")
    sections = {
        name: _build_section(cls, raw.get(name, {}), name)
        for name, cls in _SECTIONS.items()
    }
    return ExperimentConfig(**sections)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise InvalidArgumentError("config root must be a JSON object")
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        out[name] = {
            k: list(v) if isinstance(v, tuple) else v
            for k, v in section.items()
        }
    return out


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2,
                                     sort_keys=True) + "\n")
