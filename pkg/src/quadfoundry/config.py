"""Nested experiment configuration with a strict JSON file representation.

Unknown keys are rejected so typos in config files fail loudly instead of
silently running with defaults. Explicit CLI flags always win over config
file values; the file wins over built-in defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .distill import DistillConfig
from .dynamics import SimConfig
from .sac import SACConfig
from .sampling import SamplerConfig
from .trajectory import FigureEightConfig, LangevinConfig


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    pace: float = 1.0            # simulated seconds per wall second; 0 = unpaced
    frame_decimation: int = 2    # broadcast every Nth 100 Hz step (>= 50 Hz)


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    fig8: FigureEightConfig = field(default_factory=FigureEightConfig)
    sac: SACConfig = field(default_factory=SACConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    serve: ServeConfig = field(default_factory=ServeConfig)


_SECTIONS = {
    "sampler": SamplerConfig,
    "sim": SimConfig,
    "langevin": LangevinConfig,
    "fig8": FigureEightConfig,
    "sac": SACConfig,
    "distill": DistillConfig,
    "serve": ServeConfig,
}


def _build_section(cls, data: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        hint = fields[key].type
        if isinstance(value, list) and "tuple" in str(hint):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - top
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value)
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)

    def listify(node):
        if isinstance(node, dict):
            return {k: listify(v) for k, v in node.items()}
        if isinstance(node, tuple):
            return list(node)
        return node

    return listify(out)


def load_config(path: str | Path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=1))
