"""Dependent measures computed from a trial trace.

Precision task: dead time (handle first leaves a 0.03 rad corridor around
its position at the target jump), settling (tool error stays inside
0.03 rad for 0.5 s), travel time = settling instant - move instant, and
the ITAE integral over the travel window.  Dynamic task: peak forward
velocities of tool and handle before the first wall crossing, and their
ratio (gain).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .teleop import Trace


class NoImpactError(RuntimeError):
    """The dynamic-task trace never reaches the wall position."""


@dataclass(frozen=True)
class SettlingSpec:
    move_threshold: float = 0.03  # [rad]
    settle_band: float = 0.03     # [rad]
    settle_hold: float = 0.5      # [s]
    itae_origin: str = "move"     # "move" or "jump": zero of the ITAE clock

    def __post_init__(self) -> None:
        if min(self.move_threshold, self.settle_band, self.settle_hold) <= 0:
            raise ValueError("settling parameters must be positive")
        if self.itae_origin not in ("move", "jump"):
            raise ValueError("itae_origin must be 'move' or 'jump'")


@dataclass(frozen=True)
class PrecisionOutcome:
    settled: bool
    moved: bool
    dead_time: Optional[float] = None    # [s]
    travel_time: Optional[float] = None  # [s]
    itae: Optional[float] = None         # [rad s^2]

    def to_json_dict(self) -> dict:
        return {"task": "precision", **asdict(self)}


@dataclass(frozen=True)
class DynamicOutcome:
    max_tool_velocity: float    # [rad/s]
    max_handle_velocity: float  # [rad/s]
    gain: float
    impact_time: float          # [s]

    def to_json_dict(self) -> dict:
        return {"task": "dynamic", **asdict(self)}


def _first_hold_window(in_band: np.ndarray, start: int, hold_n: int) -> Optional[int]:
    """Index of the earliest run of hold_n consecutive True at/after start."""
    run = 0
    for i in range(start, len(in_band)):
        run = run + 1 if in_band[i] else 0
        if run == hold_n:
            return i - hold_n + 1
    return None


def precision_metrics(
    trace: Trace,
    target_jump_time: float,
    target_pos: float,
    spec: SettlingSpec = SettlingSpec(),
) -> PrecisionOutcome:
    """Travel time and ITAE of one precision trial."""
    t = trace.t
    dt = float(t[1] - t[0])
    theta_m = trace.col("theta_m")
    theta_out = trace.col("theta_out")
    j = int(round((target_jump_time - t[0]) / dt))
    if not 0 <= j < len(t):
        raise ValueError("target_jump_time outside the trace")

    base = theta_m[j]
    moved = np.nonzero(np.abs(theta_m[j:] - base) > spec.move_threshold)[0]
    if len(moved) == 0:
        return PrecisionOutcome(settled=False, moved=False)
    i_move = j + int(moved[0])
    dead_time = (i_move - j) * dt

    in_band = np.abs(theta_out - target_pos) < spec.settle_band
    hold_n = int(round(spec.settle_hold / dt))
    i_settle = _first_hold_window(in_band, j, hold_n)
    if i_settle is None:
        return PrecisionOutcome(settled=False, moved=True, dead_time=dead_time)

    travel_time = (i_settle - i_move) * dt
    i_origin = i_move if spec.itae_origin == "move" else j
    n_win = max(i_settle - i_origin, 0)
    rel_t = np.arange(n_win + 1) * dt
    err = np.abs(theta_out[i_origin:i_origin + n_win + 1] - target_pos)
    itae = float(np.trapezoid(rel_t * err, dx=dt))
    return PrecisionOutcome(
        settled=True, moved=True,
        dead_time=dead_time, travel_time=travel_time, itae=itae,
    )


def dynamic_metrics(trace: Trace, wall_position: float) -> DynamicOutcome:
    """Peak forward velocities and gain up to the first wall crossing."""
    theta_out = trace.col("theta_out")
    crossing = np.nonzero(theta_out >= wall_position)[0]
    if len(crossing) == 0:
        raise NoImpactError(
            f"tool never reached the wall position {wall_position} rad")
    i_hit = int(crossing[0])
    omega_out = trace.col("omega_out")[:i_hit + 1]
    omega_m = trace.col("omega_m")[:i_hit + 1]
    max_tool = float(np.max(omega_out, initial=0.0).clip(min=0.0))
    max_handle = float(np.max(omega_m, initial=0.0).clip(min=0.0))
    if max_handle <= 0.0:
        raise NoImpactError("handle never moved forward before impact")
    return DynamicOutcome(
        max_tool_velocity=max_tool,
        max_handle_velocity=max_handle,
        gain=max_tool / max_handle,
        impact_time=float(trace.t[i_hit]),
    )


def outcome_to_json(outcome, path: Path | str | None = None) -> str:
    """Serialize an outcome (units documented in outcome_schema.json)."""
    text = json.dumps(outcome.to_json_dict(), indent=2, allow_nan=False,
                      default=_json_default)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def _json_default(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    raise TypeError(f"not JSON serializable: {value!r}")
