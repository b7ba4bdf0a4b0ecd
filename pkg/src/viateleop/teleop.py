"""The bilateral loop: handle, coupling and the 1 kHz scheduler.

``run_trace`` is the batch driver (whole scenario in one engine call);
``step_teleop`` advances a single tick through the same compiled kernel,
which is what the real-time session uses.  A ``Trace`` is the frame matrix
with CSV import/export, one row per tick, columns fixed by
``engine.FRAME_COLUMNS``.
"""

from __future__ import annotations

import gzip
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import engine
from .impedance import Mode
from .operators import Coupling, OperatorModel
from .params import SystemParams
from .plant import EnvironmentConfig, FREE_AIR, PlantState, StateCorruptionError

CSV_FLOAT_FORMAT = "%.8e"  # 9 significant digits


@dataclass
class HandleState:
    theta: float = 0.0
    omega: float = 0.0
    pi_integrator: float = 0.0


@dataclass(frozen=True)
class SimFrame:
    t: float
    theta_m: float
    omega_m: float
    motor_setpoint: float
    theta_motor: float
    theta_out: float
    omega_out: float
    k_set: float
    b_set: float
    k_actual: float
    b_actual: float
    env_torque: float
    feedback_torque: float

    @classmethod
    def from_row(cls, row: np.ndarray) -> "SimFrame":
        return cls(*(float(v) for v in row))


class Trace:
    """Frame matrix of a run; shape (n_ticks, 13)."""

    columns = engine.FRAME_COLUMNS

    def __init__(self, frames: np.ndarray):
        frames = np.asarray(frames, dtype=float)
        if frames.ndim != 2 or frames.shape[1] != engine.N_FRAME:
            raise ValueError(f"expected (n, {engine.N_FRAME}) frame matrix")
        self.frames = frames

    def __len__(self) -> int:
        return self.frames.shape[0]

    def __getitem__(self, i: int) -> SimFrame:
        return SimFrame.from_row(self.frames[i])

    def col(self, name: str) -> np.ndarray:
        return self.frames[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.frames[:, 0]

    def to_csv(self, path: Union[str, Path, io.IOBase]) -> None:
        if isinstance(path, (str, Path)):
            p = Path(path)
            if p.suffix == ".gz":
                # fixed mtime keeps reruns byte-identical
                with gzip.GzipFile(p, "wb", compresslevel=1, mtime=0) as gz:
                    with io.TextIOWrapper(gz, newline="") as f:
                        self._write(f)
            else:
                with open(p, "w", newline="") as f:
                    self._write(f)
        else:
            self._write(path)

    def head(self, n: int) -> "Trace":
        return Trace(self.frames[:min(n, len(self))].copy())

    def _write(self, f) -> None:
        f.write(",".join(self.columns) + "\n")
        np.savetxt(f, self.frames, fmt=CSV_FLOAT_FORMAT, delimiter=",")

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        self._write(buf)
        return buf.getvalue().encode()

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Trace":
        p = Path(path)
        opener = gzip.open if p.suffix == ".gz" else open
        with opener(p, "rt") as f:
            header = f.readline().strip().split(",")
            if tuple(header) != cls.columns:
                raise ValueError(f"unexpected trace header: {header}")
            frames = np.loadtxt(f, delimiter=",", ndmin=2)
        return cls(frames)


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to reproduce one batch run."""

    duration: float
    operator: OperatorModel
    mode: Mode = Mode.HIGH
    env: EnvironmentConfig = FREE_AIR
    system: SystemParams = field(default_factory=SystemParams)
    start_theta: Optional[float] = None  # default: operator reference at t=0

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be positive")


def _pack(scenario: ScenarioSpec) -> np.ndarray:
    from .params import pack_params

    coupling = (engine.COUPLING_DYNAMIC
                if scenario.operator.coupling is Coupling.DYNAMIC
                else engine.COUPLING_KINEMATIC)
    sys = scenario.system
    if scenario.operator.coupling is Coupling.DYNAMIC:
        sys = SystemParams(plant=sys.plant, law=sys.law, gains=sys.gains,
                           arm=scenario.operator.arm,
                           handle_inertia=sys.handle_inertia)
    return pack_params(sys, scenario.mode.engine_id, scenario.env.engine_id,
                       scenario.env.wall_position, coupling)


def _initial_state(scenario: ScenarioSpec, ref_pos: np.ndarray,
                   ref_vel: np.ndarray) -> np.ndarray:
    from .impedance import impedance_for_mode

    theta0 = ref_pos[0] if scenario.start_theta is None else scenario.start_theta
    omega0 = ref_vel[0] if scenario.start_theta is None else 0.0
    cmd = impedance_for_mode(scenario.mode, omega0, scenario.system.law)
    state = engine.new_state_vector()
    engine.settle_state(state, theta0, omega0, theta0, cmd.k, cmd.b,
                        scenario.system.gains.c1)
    return state


def run_trace(scenario: ScenarioSpec) -> Trace:
    """Deterministic batch run: duration/control_dt frames."""
    dt = scenario.system.plant.control_dt
    n = int(round(scenario.duration / dt))
    if n <= 0:
        raise ValueError("duration must cover at least one tick")
    t_grid = np.arange(n + 1) * dt
    ref_pos, ref_vel = scenario.operator.reference(t_grid)
    if not (np.all(np.isfinite(ref_pos)) and np.all(np.isfinite(ref_vel))):
        raise StateCorruptionError("operator reference is not finite")
    state = _initial_state(scenario, ref_pos, ref_vel)
    pvec = _pack(scenario)
    frames = np.empty((n, engine.N_FRAME))
    bad = engine.run_ticks(state, pvec, ref_pos, ref_vel, frames, 0.0)
    if bad >= 0:
        raise StateCorruptionError("simulation diverged", frame_index=int(bad))
    return Trace(frames)


def step_teleop(
    handle: HandleState,
    plant_state: PlantState,
    mode: Mode,
    env: EnvironmentConfig,
    operator_ref: tuple[float, float],
    next_ref: tuple[float, float],
    system: SystemParams | None = None,
    coupling: Coupling = Coupling.KINEMATIC,
    t: float = 0.0,
) -> tuple[HandleState, PlantState, SimFrame]:
    """Advance one tick; pure function over explicit states.

    ``operator_ref`` is the (position, velocity) reference at the current
    tick, ``next_ref`` the one the handle takes next under kinematic
    coupling.
    """
    from .params import pack_params

    sys = system or SystemParams()
    if not (math.isfinite(handle.theta) and math.isfinite(handle.omega)):
        raise StateCorruptionError("non-finite handle state")
    if not plant_state.is_finite():
        raise StateCorruptionError("non-finite plant state")
    cid = (engine.COUPLING_DYNAMIC if coupling is Coupling.DYNAMIC
           else engine.COUPLING_KINEMATIC)
    pvec = pack_params(sys, mode.engine_id, env.engine_id, env.wall_position, cid)
    state = plant_state.raw.copy()
    state[engine.S_THETA_M] = handle.theta
    state[engine.S_OMEGA_M] = handle.omega
    state[engine.S_PI_INT] = handle.pi_integrator
    frame = np.empty(engine.N_FRAME)
    bad = engine.teleop_tick(state, pvec, t, operator_ref[0], operator_ref[1],
                             next_ref[0], next_ref[1], frame)
    if bad != 0:
        raise StateCorruptionError("simulation diverged", frame_index=0)
    new_handle = HandleState(
        theta=float(state[engine.S_THETA_M]),
        omega=float(state[engine.S_OMEGA_M]),
        pi_integrator=float(state[engine.S_PI_INT]),
    )
    return new_handle, PlantState(state), SimFrame.from_row(frame)
