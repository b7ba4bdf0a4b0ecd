"""Run configuration: YAML sections over the parameter dataclasses.

Every default equals the nominal system constant, so an empty file (or no
file) reproduces the reference setup.  Unknown keys are rejected rather
than ignored; flags override file values; the fully resolved configuration
can be dumped back out for archival (`--print-config`).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .experiment import ExperimentPlan
from .metrics import SettlingSpec
from .params import (AdaptiveLawParams, ArmImpedance, CouplingGains,
                     PlantParams, SystemParams)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorConfig:
    reach_duration: float = 0.25
    strike_frequency: float = 4.5
    peak_strike_velocity: float = 6.0
    jitter: float = 0.2
    coupling: str = "kinematic"

    def __post_init__(self) -> None:
        if self.coupling not in ("kinematic", "dynamic"):
            raise ConfigError("coupling must be kinematic or dynamic")


@dataclass(frozen=True)
class SysidConfig:
    freq_min: float = 0.2
    freq_max: float = 20.0
    freq_points: int = 40
    amplitude: float = 0.2
    settle_cycles: int = 3
    measure_cycles: int = 5
    signal_pair: str = "impedance"
    crossover_tol_low_db: float = 3.0
    crossover_tol_high_db: float = 3.0
    crossover_low_edge_hz: float = 1.0
    crossover_high_edge_hz: float = 10.0

    def sweep_config(self):
        import numpy as np

        from .sysid import SweepConfig

        return SweepConfig(
            freq_grid=tuple(np.geomspace(self.freq_min, self.freq_max,
                                         self.freq_points)),
            amplitude=self.amplitude,
            settle_cycles=self.settle_cycles,
            measure_cycles=self.measure_cycles,
            signal_pair=self.signal_pair,
        )


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8099
    stream_hz: float = 60.0
    stale_hold_s: float = 0.2
    velocity_clamp: float = 20.0  # [rad/s] bound on resampled handle motion
    default_mode: str = "A"
    precision_window: float = 6.0
    dynamic_window: float = 3.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    output_dir: str = "runs"
    plant: PlantParams = field(default_factory=PlantParams)
    law: AdaptiveLawParams = field(default_factory=AdaptiveLawParams)
    gains: CouplingGains = field(default_factory=CouplingGains)
    arm: ArmImpedance = field(default_factory=ArmImpedance)
    handle_inertia: float = 0.0125
    metrics: SettlingSpec = field(default_factory=SettlingSpec)
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    experiment: ExperimentPlan = field(default_factory=ExperimentPlan)
    sysid: SysidConfig = field(default_factory=SysidConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def system(self) -> SystemParams:
        return SystemParams(plant=self.plant, law=self.law, gains=self.gains,
                            arm=self.arm, handle_inertia=self.handle_inertia)


_SECTIONS = {
    "plant": PlantParams,
    "law": AdaptiveLawParams,
    "gains": CouplingGains,
    "arm": ArmImpedance,
    "metrics": SettlingSpec,
    "operator": OperatorConfig,
    "experiment": ExperimentPlan,
    "sysid": SysidConfig,
    "service": ServiceConfig,
}
_SCALARS = {"seed": int, "output_dir": str, "handle_inertia": float}


def _build_section(cls, data: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [{section}] configuration: {e}") from e


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    kwargs: dict[str, Any] = {}
    for key, caster in _SCALARS.items():
        if key in data:
            kwargs[key] = caster(data.pop(key))
    for section, cls in _SECTIONS.items():
        if section in data:
            raw = data.pop(section)
            if not isinstance(raw, dict):
                raise ConfigError(f"section [{section}] must be a mapping")
            kwargs[section] = _build_section(cls, raw, section)
    if data:
        raise ConfigError(f"unknown top-level keys: {sorted(data)}")
    return RunConfig(**kwargs)


def load_config(path: Optional[Path | str]) -> RunConfig:
    if path is None:
        return RunConfig()
    raw = yaml.safe_load(Path(path).read_text())
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration file must contain a mapping")
    return config_from_dict(raw)


def config_to_dict(cfg: RunConfig) -> dict:
    out: dict[str, Any] = {k: getattr(cfg, k) for k in _SCALARS}
    for section in _SECTIONS:
        out[section] = dataclasses.asdict(getattr(cfg, section))
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def override(cfg: RunConfig, section: str | None, **updates) -> RunConfig:
    """Functional update of a section (or the top level) of the config."""
    updates = {k: v for k, v in updates.items() if v is not None}
    if not updates:
        return cfg
    if section is None:
        return dataclasses.replace(cfg, **updates)
    return dataclasses.replace(
        cfg, **{section: dataclasses.replace(getattr(cfg, section), **updates)})
