"""Tool impedance settings and the slow-stiff/fast-soft adaptation law.

The law maps the handle velocity to a (stiffness, damping) command:
stiff at precision-task speeds, exponentially softer towards dynamic-task
speeds.  Sign is irrelevant (a fast backward stroke must soften the
actuator as much as a fast forward one), so everything is evaluated on
``abs(vm)``.

Note: the asymptotic adaptive damping 2*d_min*sqrt(k_min*m) ~ 0.00707 is
close to, but not exactly, the mode L constant 0.01; the equations are
implemented verbatim, the mismatch is intentional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from . import engine
from .params import AdaptiveLawParams


class Mode(Enum):
    HIGH = "H"
    LOW = "L"
    ADAPTIVE = "A"

    @property
    def engine_id(self) -> int:
        return {"H": engine.MODE_H, "L": engine.MODE_L, "A": engine.MODE_A}[self.value]


@dataclass(frozen=True)
class ImpedanceCommand:
    k: float  # [N m/rad]
    b: float  # [N m s/rad]

    def __post_init__(self) -> None:
        if not (math.isfinite(self.k) and math.isfinite(self.b)):
            raise ValueError("impedance command must be finite")
        if self.k < 0 or self.b < 0:
            raise ValueError("impedance command must be non-negative")


def stiffness_law(vm: float, p: AdaptiveLawParams) -> float:
    """Commanded stiffness for handle velocity vm [rad/s]."""
    if not math.isfinite(vm):
        raise ValueError("vm must be finite")
    return engine.stiffness_law_raw(vm, p.k_max, p.k_min, p.a_var, p.v_min, p.v_max)


def damping_law(vm: float, p: AdaptiveLawParams) -> float:
    """Commanded damping for handle velocity vm [rad/s]."""
    if not math.isfinite(vm):
        raise ValueError("vm must be finite")
    return engine.damping_law_raw(
        vm, p.k_max, p.k_min, p.d_max, p.d_min, p.a_var, p.v_min, p.v_max,
        p.inertia, p.b_cap,
    )


def impedance_for_mode(mode: Mode, vm: float, p: AdaptiveLawParams) -> ImpedanceCommand:
    """Impedance command for the chosen setting; H and L ignore vm."""
    if mode is Mode.HIGH:
        return ImpedanceCommand(p.k_max, p.b_cap)
    if mode is Mode.LOW:
        return ImpedanceCommand(p.k_min, p.b_low_mode)
    return ImpedanceCommand(stiffness_law(vm, p), damping_law(vm, p))
