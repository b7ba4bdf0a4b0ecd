"""Configuration dataclasses and the packed parameter vector for the engine.

Defaults are the constants of the simulated Dyrac tool device and its
teleoperation controller; every figure here is the nominal system, not a
tuning suggestion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine


@dataclass(frozen=True)
class PlantParams:
    """Physical parameters of the simulated tool device."""

    inertia: float = 0.0125              # output inertia [kg m^2]
    joint_motor_cutoff_hz: float = 20.0  # position actuator bandwidth
    stiffness_cutoff_hz: float = 10.0    # impedance actuator bandwidth
    wall_stiffness: float = 10000.0      # contact model [N m/rad]
    wall_damping: float = 20.0           # contact model [N m s/rad]
    control_dt: float = 0.001            # loop period [s]
    physics_substeps: int = 10

    def __post_init__(self) -> None:
        if not self.inertia > 0:
            raise ValueError("inertia must be positive")
        nyquist = 0.5 / self.control_dt
        for c in (self.joint_motor_cutoff_hz, self.stiffness_cutoff_hz):
            if not 0 < c < nyquist:
                raise ValueError(f"cutoff {c} Hz outside (0, {nyquist}) Hz")
        if self.wall_stiffness < 0 or self.wall_damping < 0:
            raise ValueError("wall parameters must be non-negative")
        if not self.control_dt > 0:
            raise ValueError("control_dt must be positive")
        if self.physics_substeps < 1:
            raise ValueError("physics_substeps must be >= 1")


@dataclass(frozen=True)
class AdaptiveLawParams:
    """Constants of the slow-stiff/fast-soft impedance law."""

    k_max: float = 100.0     # [N m/rad]
    k_min: float = 10.0      # [N m/rad]
    d_max: float = 0.7       # damping ratio at/below v_min
    d_min: float = 0.01      # damping ratio asymptote
    a_var: float = 6.0       # exponential decay rate
    v_min: float = 1.0       # upper velocity of a precision task [rad/s]
    v_max: float = 6.0       # lower velocity of a dynamic task [rad/s]
    inertia: float = 0.0125  # inertia used in the damping formula [kg m^2]
    b_cap: float = 0.8       # physical damping cap [N m s/rad]
    b_low_mode: float = 0.01  # mode L damping [N m s/rad]

    def __post_init__(self) -> None:
        if not self.k_max > self.k_min > 0:
            raise ValueError("need k_max > k_min > 0")
        if not self.d_max > self.d_min > 0:
            raise ValueError("need d_max > d_min > 0")
        if not self.v_max > self.v_min >= 0:
            raise ValueError("need v_max > v_min >= 0")
        if self.a_var <= 0 or self.b_cap <= 0:
            raise ValueError("a_var and b_cap must be positive")


@dataclass(frozen=True)
class CouplingGains:
    """Master-side controller gains (position PI plus force reflection)."""

    p_gain: float = 0.8          # [N m/rad]
    i_gain: float = 10.0         # [N m/(rad s)]
    c1: float = 1.0              # handle-to-tool position channel
    c2: float = 1.0              # environment-force reflection channel
    integrator_clamp: float = 5.0  # anti-windup bound [N m]

    def __post_init__(self) -> None:
        if self.p_gain < 0 or self.i_gain < 0:
            raise ValueError("PI gains must be non-negative")
        if not self.integrator_clamp > 0:
            raise ValueError("integrator_clamp must be positive")


@dataclass(frozen=True)
class ArmImpedance:
    """Stand-in impedance of the operator arm for dynamic coupling.

    Order-of-magnitude values; nothing in the modeled hardware pins them.
    """

    k_arm: float = 30.0  # [N m/rad]
    b_arm: float = 1.0   # [N m s/rad]

    def __post_init__(self) -> None:
        if self.k_arm < 0 or self.b_arm < 0:
            raise ValueError("arm impedance must be non-negative")


@dataclass(frozen=True)
class SystemParams:
    """Everything the engine needs, bundled."""

    plant: PlantParams = field(default_factory=PlantParams)
    law: AdaptiveLawParams = field(default_factory=AdaptiveLawParams)
    gains: CouplingGains = field(default_factory=CouplingGains)
    arm: ArmImpedance = field(default_factory=ArmImpedance)
    handle_inertia: float = 0.0125  # [kg m^2], invented (physical joystick)


def pack_params(
    sys: SystemParams,
    mode_id: int,
    env_kind: int,
    wall_position: float,
    coupling_id: int,
) -> np.ndarray:
    """Build the flat engine parameter vector."""
    plant = sys.plant
    law = sys.law
    gains = sys.gains
    p = np.zeros(engine.N_PARAMS)
    p[engine.P_INERTIA] = plant.inertia
    p[engine.P_DT] = plant.control_dt
    p[engine.P_SUBSTEPS] = plant.physics_substeps
    sub_dt = plant.control_dt / plant.physics_substeps
    p[engine.P_MF:engine.P_MF + 6] = engine.butterworth_coeffs(
        plant.joint_motor_cutoff_hz, sub_dt)
    kf = engine.butterworth_coeffs(plant.stiffness_cutoff_hz, sub_dt)
    p[engine.P_KF:engine.P_KF + 6] = kf
    p[engine.P_BF:engine.P_BF + 6] = kf  # same actuator drives k and b
    p[engine.P_KMAX] = law.k_max
    p[engine.P_KMIN] = law.k_min
    p[engine.P_DMAX] = law.d_max
    p[engine.P_DMIN] = law.d_min
    p[engine.P_AVAR] = law.a_var
    p[engine.P_VMIN] = law.v_min
    p[engine.P_VMAX] = law.v_max
    p[engine.P_LAWM] = law.inertia
    p[engine.P_BCAP] = law.b_cap
    p[engine.P_BLOW] = law.b_low_mode
    p[engine.P_MODE] = mode_id
    p[engine.P_ENV] = env_kind
    p[engine.P_WALLPOS] = wall_position
    p[engine.P_WALLK] = plant.wall_stiffness
    p[engine.P_WALLB] = plant.wall_damping
    p[engine.P_COUPLING] = coupling_id
    p[engine.P_ARMK] = sys.arm.k_arm
    p[engine.P_ARMB] = sys.arm.b_arm
    p[engine.P_HINERTIA] = sys.handle_inertia
    p[engine.P_PGAIN] = gains.p_gain
    p[engine.P_IGAIN] = gains.i_gain
    p[engine.P_C1] = gains.c1
    p[engine.P_C2] = gains.c2
    p[engine.P_ICLAMP] = gains.integrator_clamp
    return p
