"""Public API of the simulated tool device (plant).

The plant is an output inertia driven through a variable spring-damper by
a position-controlled joint motor; both the motor position and the
realized impedance lag their setpoints through second-order Butterworth
actuator models.  The environment is free air or a one-sided damped wall.

State is carried in the flat engine vector; this module wraps it in a
small value type so callers never index raw arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import engine
from .impedance import ImpedanceCommand
from .params import PlantParams, SystemParams


class StateCorruptionError(RuntimeError):
    """Raised when a simulation state stops being finite."""

    def __init__(self, message: str, frame_index: Optional[int] = None):
        super().__init__(message)
        self.frame_index = frame_index


class EnvironmentKind(Enum):
    FREE_AIR = "free"
    WALL = "wall"


@dataclass(frozen=True)
class EnvironmentConfig:
    variant: EnvironmentKind = EnvironmentKind.FREE_AIR
    wall_position: float = 0.0  # [rad], used when variant is WALL

    def __post_init__(self) -> None:
        if self.variant is EnvironmentKind.WALL and not math.isfinite(self.wall_position):
            raise ValueError("wall environment requires a finite wall_position")

    @property
    def engine_id(self) -> int:
        return engine.ENV_WALL if self.variant is EnvironmentKind.WALL else engine.ENV_FREE


FREE_AIR = EnvironmentConfig(EnvironmentKind.FREE_AIR)


def wall_at(position: float) -> EnvironmentConfig:
    return EnvironmentConfig(EnvironmentKind.WALL, position)


@dataclass
class PlantState:
    """Snapshot of the tool device, including actuator filter internals."""

    raw: np.ndarray = field(default_factory=engine.new_state_vector)

    @classmethod
    def at_rest(cls, theta: float = 0.0, k: float = 100.0, b: float = 0.8) -> "PlantState":
        """Settled state: output at theta, motor at theta, filters converged."""
        s = cls()
        engine.settle_state(s.raw, theta, 0.0, theta, k, b)
        return s

    @property
    def theta_out(self) -> float:
        return float(self.raw[engine.S_THETA_OUT])

    @property
    def omega_out(self) -> float:
        return float(self.raw[engine.S_OMEGA_OUT])

    @property
    def theta_motor(self) -> float:
        return float(self.raw[engine.S_MOTOR_Y])

    @property
    def omega_motor(self) -> float:
        return float(self.raw[engine.S_MOTOR_DY])

    @property
    def k_actual(self) -> float:
        return max(float(self.raw[engine.S_K_Y]), 0.0)

    @property
    def b_actual(self) -> float:
        return max(float(self.raw[engine.S_B_Y]), 0.0)

    @property
    def env_torque(self) -> float:
        return float(self.raw[engine.S_ENV_TQ])

    def copy(self) -> "PlantState":
        return PlantState(self.raw.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.raw)))


def environment_torque(theta_out: float, omega_out: float, env: EnvironmentConfig,
                       params: PlantParams | None = None) -> float:
    """Torque the environment applies to the tool output [N m]."""
    p = params or PlantParams()
    return float(engine.env_torque_raw(
        theta_out, omega_out, env.engine_id, env.wall_position,
        p.wall_stiffness, p.wall_damping,
    ))


def step_plant(
    state: PlantState,
    motor_setpoint: float,
    impedance_setpoint: ImpedanceCommand,
    env: EnvironmentConfig,
    params: PlantParams | None = None,
) -> PlantState:
    """Advance the plant one control tick; returns a new state."""
    p = params or PlantParams()
    if not state.is_finite() or not math.isfinite(motor_setpoint):
        raise StateCorruptionError("non-finite plant state or setpoint")
    # ImpedanceCommand validates non-negativity/finiteness on construction
    sys = SystemParams(plant=p)
    pvec = _plant_pvec(sys, env)
    new = state.copy()
    engine.plant_tick(new.raw, pvec, motor_setpoint,
                      impedance_setpoint.k, impedance_setpoint.b)
    if not new.is_finite():
        raise StateCorruptionError("plant state diverged", frame_index=0)
    return new


def _plant_pvec(sys: SystemParams, env: EnvironmentConfig) -> np.ndarray:
    from .params import pack_params

    return pack_params(sys, engine.MODE_H, env.engine_id, env.wall_position,
                       engine.COUPLING_KINEMATIC)
