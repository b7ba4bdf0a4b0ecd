"""Scripted operators standing in for the human at the handle.

Two motion primitives cover the tasks: a minimum-jerk reach for precision
moves and a one-cycle backswing/forward stroke for hammering.  A playback
variant replays an arbitrary sampled trajectory.  Coupling is either
kinematic (the handle is the trajectory) or dynamic (the trajectory is a
reference tracked by a spring-damper arm that also feels the feedback
torque).

Virtual participants are seeded +/-20 % perturbations of the nominal
motion parameters, giving a deterministic synthetic cohort.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Protocol, Sequence

import numpy as np

from .params import ArmImpedance


def min_jerk(t, distance: float, duration: float):
    """Minimum-jerk rest-to-rest profile: position and velocity at time t.

    position = distance * (10 tau^3 - 15 tau^4 + 6 tau^5), tau clamped to
    [0, 1]; works elementwise on arrays.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    tau = np.clip(np.asarray(t, dtype=float) / duration, 0.0, 1.0)
    pos = distance * tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)
    vel = distance / duration * (30.0 * tau**2 - 60.0 * tau**3 + 30.0 * tau**4)
    if np.isscalar(t):
        return float(pos), float(vel)
    return pos, vel


@dataclass(frozen=True)
class MinJerkReach:
    """Hold at ``start`` until ``start_time``, then reach ``distance``."""

    distance: float = 0.3   # [rad], signed
    duration: float = 0.4   # [s]
    start: float = 0.0      # [rad]
    start_time: float = 0.0  # [s]

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    def sample(self, t: np.ndarray):
        pos, vel = min_jerk(t - self.start_time, self.distance, self.duration)
        return self.start + pos, vel


@dataclass(frozen=True)
class StrikeProfile:
    """One hammering stroke: raised-cosine backswing, half-cosine forward.

    Both phases last half a strike period, so the whole stroke is one
    period at ``strike_frequency`` -- the pump that excites a resonance at
    that frequency.  The forward swing peaks at ``peak_handle_velocity``
    and carries the handle past the start by half the forward travel.
    """

    backswing: float = 0.15          # [rad]
    strike_frequency: float = 4.5    # [Hz]
    peak_handle_velocity: float = 5.0  # [rad/s]
    start: float = 0.0               # [rad]
    start_time: float = 0.0          # [s]

    def __post_init__(self) -> None:
        if not self.strike_frequency > 0:
            raise ValueError("strike_frequency must be positive")
        if not self.peak_handle_velocity > 0:
            raise ValueError("peak_handle_velocity must be positive")
        if self.backswing < 0:
            raise ValueError("backswing must be non-negative")

    @property
    def forward_travel(self) -> float:
        # half-cosine stroke: peak velocity = travel * omega / 2
        return 2.0 * self.peak_handle_velocity / (2.0 * np.pi * self.strike_frequency)

    def sample(self, t: np.ndarray):
        t = np.asarray(t, dtype=float) - self.start_time
        w = 2.0 * np.pi * self.strike_frequency
        half = 0.5 / self.strike_frequency
        hb = self.backswing / 2.0
        ha = self.forward_travel / 2.0
        pos = np.full_like(t, self.start)
        vel = np.zeros_like(t)

        back = (t >= 0.0) & (t < half)
        tb = t[back]
        pos[back] = self.start - hb * (1.0 - np.cos(w * tb))
        vel[back] = -hb * w * np.sin(w * tb)

        fwd = (t >= half) & (t < 2 * half)
        tf = t[fwd] - half
        pos[fwd] = self.start - self.backswing + ha * (1.0 - np.cos(w * tf))
        vel[fwd] = ha * w * np.sin(w * tf)

        done = t >= 2 * half
        pos[done] = self.start - self.backswing + self.forward_travel
        return pos, vel


@dataclass(frozen=True)
class Playback:
    """Linear interpolation of an arbitrarily sampled (t, position) path."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or t.shape != x.shape or len(t) < 2:
            raise ValueError("need matching 1-d arrays with >= 2 samples")
        if not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)

    @classmethod
    def from_csv(cls, path) -> "Playback":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])

    def sample(self, t: np.ndarray):
        t = np.asarray(t, dtype=float)
        pos = np.interp(t, self.times, self.positions)
        # velocity of the piecewise-linear path, sampled mid-consistent
        slopes = np.diff(self.positions) / np.diff(self.times)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1,
                      0, len(slopes) - 1)
        vel = slopes[idx]
        vel = np.where((t <= self.times[0]) | (t >= self.times[-1]), 0.0, vel)
        return pos, vel


class Motion(Protocol):
    def sample(self, t: np.ndarray) -> tuple: ...


class Coupling(Enum):
    KINEMATIC = "kinematic"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class OperatorModel:
    motion: Motion
    coupling: Coupling = Coupling.KINEMATIC
    arm: ArmImpedance = field(default_factory=ArmImpedance)

    def reference(self, t_grid: np.ndarray):
        pos, vel = self.motion.sample(t_grid)
        return np.asarray(pos, dtype=float), np.asarray(vel, dtype=float)


@dataclass(frozen=True)
class VirtualParticipant:
    """Deterministic per-participant motion parameters."""

    seed: int
    reach_duration: float
    strike_frequency: float
    peak_strike_velocity: float

    def reach(self, start: float, distance: float, start_time: float = 0.0,
              coupling: Coupling = Coupling.KINEMATIC) -> OperatorModel:
        return OperatorModel(
            MinJerkReach(distance=distance, duration=self.reach_duration,
                         start=start, start_time=start_time),
            coupling=coupling,
        )

    def strike(self, start: float, start_time: float = 0.0,
               coupling: Coupling = Coupling.KINEMATIC,
               backswing: float | None = None) -> OperatorModel:
        prof = StrikeProfile(
            strike_frequency=self.strike_frequency,
            peak_handle_velocity=self.peak_strike_velocity,
            start=start, start_time=start_time,
        )
        if backswing is None:
            backswing = default_backswing(prof)
        return OperatorModel(replace(prof, backswing=backswing), coupling=coupling)


BACKSWING_RATIO = 0.45


def default_backswing(profile: StrikeProfile) -> float:
    """Backswing as a fixed fraction of the forward half-travel.

    The ratio is calibrated by simulation sweep so that a nominal strike
    impacts early enough in the stroke for a stiff tool to stay near unit
    velocity gain while a soft tool still collects its resonance boost.
    """
    return BACKSWING_RATIO * profile.forward_travel / 2.0


NOMINAL_REACH_DURATION = 0.25   # [s] for the 0.3 rad precision step
NOMINAL_STRIKE_FREQUENCY = 4.5  # [Hz], matched to the mode L resonance
NOMINAL_PEAK_STRIKE_VELOCITY = 6.0  # [rad/s]
JITTER_FRACTION = 0.2


def make_virtual_participant(
    seed: int,
    reach_duration: float = NOMINAL_REACH_DURATION,
    strike_frequency: float = NOMINAL_STRIKE_FREQUENCY,
    peak_strike_velocity: float = NOMINAL_PEAK_STRIKE_VELOCITY,
    jitter: float = JITTER_FRACTION,
) -> VirtualParticipant:
    """Seeded participant: each motion parameter is drawn uniformly within
    +/-jitter of its nominal value."""
    rng = np.random.default_rng(seed)
    scale = lambda nominal: float(nominal * rng.uniform(1.0 - jitter, 1.0 + jitter))
    return VirtualParticipant(
        seed=seed,
        reach_duration=scale(reach_duration),
        strike_frequency=scale(strike_frequency),
        peak_strike_velocity=scale(peak_strike_velocity),
    )


def make_cohort(n: int, master_seed: int, **kwargs) -> list[VirtualParticipant]:
    seeds = np.random.SeedSequence(master_seed).generate_state(n)
    return [make_virtual_participant(int(s), **kwargs) for s in seeds]
