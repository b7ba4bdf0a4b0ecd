"""Numeric core of the simulator.

Everything that runs inside the 1 kHz loop lives here as numba kernels
operating on flat float64 vectors, so the batch harness, the single-step
API and the real-time session all execute the exact same compiled code
(bit-identical results for identical inputs).

State vector layout (``new_state_vector``):

    0  theta_out      tool output position [rad]
    1  omega_out      tool output velocity [rad/s]
    2  motor_y        joint motor filter: position state [rad]
    3  motor_dy       joint motor filter: derivative state [rad/s]
    4  k_y            stiffness filter: value state [N m/rad]
    5  k_dy           stiffness filter: derivative state
    6  b_y            damping filter: value state [N m s/rad]
    7  b_dy           damping filter: derivative state
    8  env_torque     last computed environment torque [N m]
    9  theta_m        handle position [rad]
    10 omega_m        handle velocity [rad/s]
    11 pi_integrator  integral term of the master PI [N m]

The parameter vector (``pack_params`` in params.py) is indexed by the
``P_*`` constants below.  Filters are continuous second-order Butterworth
sections whose state matrices come from the bilinear (trapezoidal)
transform at the substep rate, driven by the zero-order-held input of the
current tick; the output inertia is integrated with the implicit midpoint
rule (energy-exact for frozen spring/damper), with the environment torque
held constant over a substep.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

N_STATE = 12

# state indices
S_THETA_OUT = 0
S_OMEGA_OUT = 1
S_MOTOR_Y = 2
S_MOTOR_DY = 3
S_K_Y = 4
S_K_DY = 5
S_B_Y = 6
S_B_DY = 7
S_ENV_TQ = 8
S_THETA_M = 9
S_OMEGA_M = 10
S_PI_INT = 11

# parameter indices
P_INERTIA = 0
P_DT = 1
P_SUBSTEPS = 2
P_MF = 3    # motor filter coefficients, 6 slots (a11 a12 a21 a22 b1 b2)
P_KF = 9    # stiffness filter coefficients
P_BF = 15   # damping filter coefficients
P_KMAX = 21
P_KMIN = 22
P_DMAX = 23
P_DMIN = 24
P_AVAR = 25
P_VMIN = 26
P_VMAX = 27
P_LAWM = 28
P_BCAP = 29
P_BLOW = 30
P_MODE = 31       # 0 = H, 1 = L, 2 = A
P_ENV = 32        # 0 = free air, 1 = wall
P_WALLPOS = 33
P_WALLK = 34
P_WALLB = 35
P_COUPLING = 36   # 0 = kinematic, 1 = dynamic
P_ARMK = 37
P_ARMB = 38
P_HINERTIA = 39
P_PGAIN = 40
P_IGAIN = 41
P_C1 = 42
P_C2 = 43
P_ICLAMP = 44
N_PARAMS = 45

MODE_H = 0
MODE_L = 1
MODE_A = 2

ENV_FREE = 0
ENV_WALL = 1

COUPLING_KINEMATIC = 0
COUPLING_DYNAMIC = 1

# frame columns, in CSV order
FRAME_COLUMNS = (
    "t",
    "theta_m",
    "omega_m",
    "motor_setpoint",
    "theta_motor",
    "theta_out",
    "omega_out",
    "k_set",
    "b_set",
    "k_actual",
    "b_actual",
    "env_torque",
    "feedback_torque",
)
N_FRAME = len(FRAME_COLUMNS)


def butterworth_coeffs(cutoff_hz: float, dt: float) -> np.ndarray:
    """Discrete coefficients of a unity-gain second-order Butterworth
    low-pass, as the 6-vector (a11 a12 a21 a22 b1 b2).

    The filter is the state-space system x = [y, dy/dt],
    dx/dt = A x + B u with A = [[0, 1], [-w^2, -sqrt(2) w]],
    B = [0, w^2]; the state matrices are the trapezoidal (bilinear) ones
    and the input of the current step is zero-order held:
    x' = Ad x + Bd u.  Bd is normalized so the DC fixed point is exactly
    y = u.
    """
    w = 2.0 * math.pi * cutoff_hz
    a = np.array([[0.0, 1.0], [-w * w, -math.sqrt(2.0) * w]])
    b = np.array([0.0, w * w])
    half = 0.5 * dt
    m = np.eye(2) - half * a
    minv = np.linalg.inv(m)
    ad = minv @ (np.eye(2) + half * a)
    bd = minv @ (dt * b)
    # enforce unit DC gain: steady state solves (I - Ad) x = Bd u
    dc = np.linalg.solve(np.eye(2) - ad, bd)[0]
    bd /= dc
    return np.array([ad[0, 0], ad[0, 1], ad[1, 0], ad[1, 1], bd[0], bd[1]])


@njit(cache=True)
def stiffness_law_raw(vm, kmax, kmin, avar, vmin, vmax):
    v = abs(vm)
    k = (kmax - kmin) * math.exp(-avar * (v - vmin) / (vmax - vmin)) + kmin
    return k if k < kmax else kmax


@njit(cache=True)
def damping_law_raw(vm, kmax, kmin, dmax, dmin, avar, vmin, vmax, m, bcap):
    v = abs(vm)
    x = math.exp(-avar * (v - vmin) / (vmax - vmin))
    d = (dmax - dmin) * x + dmin
    k = stiffness_law_raw(vm, kmax, kmin, avar, vmin, vmax)
    b = 2.0 * d * math.sqrt(k * m)
    return b if b < bcap else bcap


@njit(cache=True)
def env_torque_raw(theta_out, omega_out, env_kind, wall_pos, wall_k, wall_b):
    """One-sided wall: resists penetration, never pulls the tool back in."""
    if env_kind != ENV_WALL:
        return 0.0
    pen = theta_out - wall_pos
    if pen <= 0.0:
        return 0.0
    tq = -(wall_k * pen + wall_b * omega_out)
    return tq if tq < 0.0 else 0.0


@njit(cache=True)
def _filter_step(state, params, ys, cs, u):
    """Advance one filter substep; ys/cs are base indices into state/params."""
    y = state[ys]
    dy = state[ys + 1]
    state[ys] = params[cs] * y + params[cs + 1] * dy + params[cs + 4] * u
    state[ys + 1] = params[cs + 2] * y + params[cs + 3] * dy + params[cs + 5] * u


@njit(cache=True)
def plant_tick(state, params, motor_sp, k_set, b_set):
    """Advance the tool device by one control tick (substepped)."""
    inertia = params[P_INERTIA]
    nsub = int(params[P_SUBSTEPS])
    h = params[P_DT] / nsub
    env_kind = int(params[P_ENV])
    wall_pos = params[P_WALLPOS]
    wall_k = params[P_WALLK]
    wall_b = params[P_WALLB]

    theta = state[S_THETA_OUT]
    omega = state[S_OMEGA_OUT]
    env_tq = state[S_ENV_TQ]
    for _ in range(nsub):
        _filter_step(state, params, S_MOTOR_Y, P_MF, motor_sp)
        _filter_step(state, params, S_K_Y, P_KF, k_set)
        _filter_step(state, params, S_B_Y, P_BF, b_set)
        ym = state[S_MOTOR_Y]
        dym = state[S_MOTOR_DY]
        # actuator cannot realize negative impedance during filter transients
        k = state[S_K_Y]
        if k < 0.0:
            k = 0.0
        b = state[S_B_Y]
        if b < 0.0:
            b = 0.0
        env_tq = env_torque_raw(theta, omega, env_kind, wall_pos, wall_k, wall_b)
        # implicit midpoint on m*domega = k(ym-theta) + b(dym-omega) + env_tq
        # with k, b, ym, dym, env_tq frozen over the substep
        c = 0.5 * h / inertia
        denom = 1.0 + c * (k * 0.5 * h + b)
        num = omega * (1.0 - c * (k * 0.5 * h + b)) + 2.0 * c * (
            k * (ym - theta) + b * dym + env_tq
        )
        omega_new = num / denom
        theta = theta + 0.5 * h * (omega + omega_new)
        omega = omega_new

    state[S_THETA_OUT] = theta
    state[S_OMEGA_OUT] = omega
    state[S_ENV_TQ] = env_tq


@njit(cache=True)
def teleop_tick(state, params, t, ref_pos, ref_vel, ref_pos_next, ref_vel_next, frame):
    """One full loop tick: coupling, impedance law, plant, feedback, handle.

    Writes the 13 frame signals into ``frame`` and returns 0, or returns 1
    if the state went non-finite (the frame then holds the bad values).
    """
    theta_m = state[S_THETA_M]
    omega_m = state[S_OMEGA_M]
    motor_sp = params[P_C1] * theta_m

    mode = int(params[P_MODE])
    if mode == MODE_H:
        k_set = params[P_KMAX]
        b_set = params[P_BCAP]
    elif mode == MODE_L:
        k_set = params[P_KMIN]
        b_set = params[P_BLOW]
    else:
        k_set = stiffness_law_raw(
            omega_m, params[P_KMAX], params[P_KMIN], params[P_AVAR],
            params[P_VMIN], params[P_VMAX],
        )
        b_set = damping_law_raw(
            omega_m, params[P_KMAX], params[P_KMIN], params[P_DMAX],
            params[P_DMIN], params[P_AVAR], params[P_VMIN], params[P_VMAX],
            params[P_LAWM], params[P_BCAP],
        )

    plant_tick(state, params, motor_sp, k_set, b_set)

    # master PI on the position error plus environment-force reflection
    err = state[S_THETA_OUT] - theta_m
    integ = state[S_PI_INT] + params[P_IGAIN] * err * params[P_DT]
    clamp = params[P_ICLAMP]
    if integ > clamp:
        integ = clamp
    elif integ < -clamp:
        integ = -clamp
    state[S_PI_INT] = integ
    feedback = params[P_PGAIN] * err + integ - params[P_C2] * state[S_ENV_TQ]

    k_act = state[S_K_Y]
    if k_act < 0.0:
        k_act = 0.0
    b_act = state[S_B_Y]
    if b_act < 0.0:
        b_act = 0.0

    frame[0] = t
    frame[1] = theta_m
    frame[2] = omega_m
    frame[3] = motor_sp
    frame[4] = state[S_MOTOR_Y]
    frame[5] = state[S_THETA_OUT]
    frame[6] = state[S_OMEGA_OUT]
    frame[7] = k_set
    frame[8] = b_set
    frame[9] = k_act
    frame[10] = b_act
    frame[11] = state[S_ENV_TQ]
    frame[12] = feedback

    # advance the handle for the next tick
    if int(params[P_COUPLING]) == COUPLING_KINEMATIC:
        state[S_THETA_M] = ref_pos_next
        state[S_OMEGA_M] = ref_vel_next
    else:
        dt = params[P_DT]
        alpha = (
            params[P_ARMK] * (ref_pos - theta_m)
            + params[P_ARMB] * (ref_vel - omega_m)
            + feedback
        ) / params[P_HINERTIA]
        omega_m = omega_m + dt * alpha
        state[S_THETA_M] = theta_m + dt * omega_m
        state[S_OMEGA_M] = omega_m

    ok = (
        math.isfinite(state[S_THETA_OUT])
        and math.isfinite(state[S_OMEGA_OUT])
        and math.isfinite(state[S_THETA_M])
        and math.isfinite(state[S_OMEGA_M])
    )
    return 0 if ok else 1


@njit(cache=True)
def run_ticks(state, params, ref_pos, ref_vel, frames, t0):
    """Run len(frames) ticks; ref arrays must have one extra sample.

    Returns -1 on success, else the index of the first non-finite frame.
    """
    n = frames.shape[0]
    dt = params[P_DT]
    for i in range(n):
        bad = teleop_tick(
            state, params, t0 + i * dt,
            ref_pos[i], ref_vel[i], ref_pos[i + 1], ref_vel[i + 1],
            frames[i],
        )
        if bad != 0:
            return i
    return -1


def new_state_vector() -> np.ndarray:
    return np.zeros(N_STATE)


def settle_state(
    state: np.ndarray,
    theta_m: float,
    omega_m: float,
    theta_out: float,
    k: float,
    b: float,
    c1: float = 1.0,
) -> None:
    """Put all filters and integrators at their fixed point for the given
    handle/tool pose so a run starts transient-free."""
    state[S_THETA_M] = theta_m
    state[S_OMEGA_M] = omega_m
    state[S_THETA_OUT] = theta_out
    state[S_OMEGA_OUT] = 0.0
    state[S_MOTOR_Y] = c1 * theta_m
    state[S_MOTOR_DY] = 0.0
    state[S_K_Y] = k
    state[S_K_DY] = 0.0
    state[S_B_Y] = b
    state[S_B_DY] = 0.0
    state[S_ENV_TQ] = 0.0
    state[S_PI_INT] = 0.0
