"""Frequency-response identification of the perceived tool impedance.

Sine-by-sine sweep of the kinematically driven handle; each grid point
discards whole settle cycles and fits the fundamental over whole measure
cycles (single-bin Fourier correlation).  The default measured pair is
the impedance the operator perceives at the handle, feedback torque over
handle velocity; the tool/handle position ratio is available as an
alternative pair.  Calibration note: with the default 0.2 rad amplitude
the low-impedance resonance identifies at 4.5 Hz and the adaptive
setting shows its high-gain region near 6.5 Hz, while tracking the high
setting below 1 Hz and the low setting above 10 Hz.

The analytic reference evaluates the closed-form response of the linear
loop (Butterworth motor model, spring-damper on the output inertia,
master PI) for the permanently high/low settings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import engine
from .impedance import Mode, impedance_for_mode
from .params import SystemParams

SIGNAL_PAIRS = {
    # perceived impedance at the handle: torque over velocity
    "impedance": ("feedback_torque", "omega_m"),
    # transmission ratio: tool position over handle position
    "position": ("theta_out", "theta_m"),
}


@dataclass(frozen=True)
class SweepConfig:
    freq_grid: tuple = tuple(np.geomspace(0.2, 20.0, 40))
    amplitude: float = 0.2        # [rad]
    settle_cycles: int = 3
    min_settle_s: float = 8.0     # covers the low-damping 2.5 s decay time
    measure_cycles: int = 5
    signal_pair: str = "impedance"
    onset_ramp: bool = True       # raised-cosine fade-in over the settle span

    def __post_init__(self) -> None:
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.settle_cycles < 1 or self.measure_cycles < 1:
            raise ValueError("cycle counts must be >= 1")
        if self.min_settle_s < 0:
            raise ValueError("min_settle_s must be non-negative")
        if self.signal_pair not in SIGNAL_PAIRS:
            raise ValueError(f"unknown signal pair {self.signal_pair!r}")

    def validate_against(self, control_dt: float) -> None:
        nyquist = 0.5 / control_dt
        if max(self.freq_grid) >= nyquist:
            raise ValueError("frequency grid exceeds the loop Nyquist rate")


@dataclass(frozen=True)
class FrequencyResponsePoint:
    freq: float          # [Hz], cycle-aligned to the tick grid
    magnitude_db: float
    phase_deg: float


@dataclass(frozen=True)
class SweepResult:
    mode: Mode
    points: tuple
    failed_freqs: tuple = ()

    @property
    def freqs(self) -> np.ndarray:
        return np.array([p.freq for p in self.points])

    @property
    def magnitudes_db(self) -> np.ndarray:
        return np.array([p.magnitude_db for p in self.points])

    @property
    def phases_deg(self) -> np.ndarray:
        return np.array([p.phase_deg for p in self.points])


def _aligned_frequency(f: float, dt: float) -> tuple[float, int]:
    """Snap f to a whole number of ticks per cycle."""
    ticks_per_cycle = max(2, int(round(1.0 / (f * dt))))
    return 1.0 / (ticks_per_cycle * dt), ticks_per_cycle


def measure_response(
    mode: Mode,
    cfg: SweepConfig = SweepConfig(),
    system: SystemParams | None = None,
) -> SweepResult:
    """Measured frequency response of the loop under the given setting."""
    sys = system or SystemParams()
    cfg.validate_against(sys.plant.control_dt)
    dt = sys.plant.control_dt
    out_col, in_col = SIGNAL_PAIRS[cfg.signal_pair]
    i_out = engine.FRAME_COLUMNS.index(out_col)
    i_in = engine.FRAME_COLUMNS.index(in_col)

    from .params import pack_params

    pvec = pack_params(sys, mode.engine_id, engine.ENV_FREE, 0.0,
                       engine.COUPLING_KINEMATIC)
    points = []
    failed = []
    for f in cfg.freq_grid:
        f_act, ticks_per_cycle = _aligned_frequency(f, dt)
        settle_cycles = max(cfg.settle_cycles,
                            math.ceil(cfg.min_settle_s * f_act))
        n_settle = settle_cycles * ticks_per_cycle
        n = n_settle + cfg.measure_cycles * ticks_per_cycle
        t = np.arange(n + 1) * dt
        w = 2.0 * math.pi * f_act
        ref_pos = cfg.amplitude * np.sin(w * t)
        ref_vel = cfg.amplitude * w * np.cos(w * t)
        if cfg.onset_ramp and n_settle > 0:
            # fading the excitation in keeps the sine onset from ringing
            # the plant resonance into the measurement window
            t_ramp = n_settle * dt
            mask = t < t_ramp
            env = 0.5 * (1.0 - np.cos(np.pi * t[mask] / t_ramp))
            denv = 0.5 * np.pi / t_ramp * np.sin(np.pi * t[mask] / t_ramp)
            ref_vel[mask] = env * ref_vel[mask] + denv * ref_pos[mask]
            ref_pos[mask] = env * ref_pos[mask]

        state = engine.new_state_vector()
        cmd = impedance_for_mode(mode, ref_vel[0], sys.law)
        engine.settle_state(state, ref_pos[0], ref_vel[0], ref_pos[0],
                            cmd.k, cmd.b, sys.gains.c1)
        frames = np.empty((n, engine.N_FRAME))
        bad = engine.run_ticks(state, pvec, ref_pos, ref_vel, frames, 0.0)
        if bad >= 0 or not np.all(np.isfinite(frames)):
            failed.append(f_act)
            continue
        seg = frames[n_settle:]
        probe = np.exp(-1j * w * seg[:, 0])
        num = np.sum(seg[:, i_out] * probe)
        den = np.sum(seg[:, i_in] * probe)
        if den == 0:
            failed.append(f_act)
            continue
        h = num / den
        points.append(FrequencyResponsePoint(
            freq=f_act,
            magnitude_db=20.0 * math.log10(abs(h)),
            phase_deg=math.degrees(math.atan2(h.imag, h.real)),
        ))
    return SweepResult(mode=mode, points=tuple(points), failed_freqs=tuple(failed))


def analytic_response(
    mode: Mode,
    freqs: Sequence[float],
    signal_pair: str = "impedance",
    system: SystemParams | None = None,
) -> SweepResult:
    """Closed-form response of the linear loop; modes H and L only."""
    if mode is Mode.ADAPTIVE:
        raise ValueError("the adaptive setting is nonlinear; no closed form")
    sys = system or SystemParams()
    cmd = impedance_for_mode(mode, 0.0, sys.law)
    k, b = cmd.k, cmd.b
    m = sys.plant.inertia
    wc = 2.0 * math.pi * sys.plant.joint_motor_cutoff_hz
    pg, ig = sys.gains.p_gain, sys.gains.i_gain
    points = []
    for f in freqs:
        s = 1j * 2.0 * math.pi * f
        motor = wc * wc / (s * s + math.sqrt(2.0) * wc * s + wc * wc)
        coupling = (b * s + k) / (m * s * s + b * s + k)
        g = motor * coupling  # theta_out / theta_m
        if signal_pair == "position":
            h = g
        elif signal_pair == "impedance":
            # feedback = (p + i/s)(theta_out - theta_m); velocity = s theta_m
            h = (pg + ig / s) * (g - 1.0) / s
        else:
            raise ValueError(f"unknown signal pair {signal_pair!r}")
        points.append(FrequencyResponsePoint(
            freq=float(f),
            magnitude_db=20.0 * math.log10(abs(h)),
            phase_deg=math.degrees(math.atan2(h.imag, h.real)),
        ))
    return SweepResult(mode=mode, points=tuple(points))


def peak_frequency(result: SweepResult, refine: bool = True) -> float:
    """Location of the highest interior local magnitude maximum [Hz].

    A log-frequency parabola through the peak and its neighbors refines
    the estimate between grid points.
    """
    fs = result.freqs
    mags = result.magnitudes_db
    best = None
    for i in range(1, len(mags) - 1):
        if mags[i] > mags[i - 1] and mags[i] >= mags[i + 1]:
            if best is None or mags[i] > mags[best]:
                best = i
    if best is None:
        best = int(np.argmax(mags))
        return float(fs[best])
    if not refine:
        return float(fs[best])
    x = np.log(fs[best - 1:best + 2])
    y = mags[best - 1:best + 2]
    den = y[0] - 2.0 * y[1] + y[2]
    if den >= 0:
        return float(fs[best])
    h = (x[2] - x[0]) / 2.0
    return float(np.exp(x[1] + 0.5 * h * (y[0] - y[2]) / den))


@dataclass(frozen=True)
class CrossoverReport:
    passed: bool
    low_band_mean_db: float   # mean |A - H| below the low edge
    high_band_mean_db: float  # mean |A - L| above the high edge
    tol_low_db: float
    tol_high_db: float
    low_edge_hz: float
    high_edge_hz: float

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"crossover {verdict}: "
            f"mean|A-H| below {self.low_edge_hz:g} Hz = {self.low_band_mean_db:.2f} dB "
            f"(tol {self.tol_low_db:g}), "
            f"mean|A-L| above {self.high_edge_hz:g} Hz = {self.high_band_mean_db:.2f} dB "
            f"(tol {self.tol_high_db:g})"
        )


def crossover_check(
    high: SweepResult,
    low: SweepResult,
    adaptive: SweepResult,
    tol_low_db: float = 3.0,
    tol_high_db: float = 3.0,
    low_edge_hz: float = 1.0,
    high_edge_hz: float = 10.0,
) -> CrossoverReport:
    """Slow-stiff/fast-soft check: the adaptive magnitude follows the high
    setting below low_edge_hz and the low setting above high_edge_hz."""
    fa = adaptive.freqs
    if not (np.allclose(fa, high.freqs) and np.allclose(fa, low.freqs)):
        raise ValueError("sweeps must share the same frequency grid")
    lo = fa < low_edge_hz
    hi = fa > high_edge_hz
    if not (lo.any() and hi.any()):
        raise ValueError("grid does not cover both crossover bands")
    d_lo = float(np.mean(np.abs(adaptive.magnitudes_db[lo] - high.magnitudes_db[lo])))
    d_hi = float(np.mean(np.abs(adaptive.magnitudes_db[hi] - low.magnitudes_db[hi])))
    return CrossoverReport(
        passed=(d_lo < tol_low_db) and (d_hi < tol_high_db),
        low_band_mean_db=d_lo,
        high_band_mean_db=d_hi,
        tol_low_db=tol_low_db,
        tol_high_db=tol_high_db,
        low_edge_hz=low_edge_hz,
        high_edge_hz=high_edge_hz,
    )


def sweep_to_csv(
    path: Path | str,
    measured: dict,
    analytic: dict | None = None,
) -> None:
    """Write sweep CSV: freq plus magnitude/phase per mode, measured and
    analytic columns side by side for external plotting."""
    analytic = analytic or {}
    modes = sorted(measured, key=lambda m: m.value)
    freqs = measured[modes[0]].freqs
    cols = ["freq_hz"]
    data = [freqs]
    for m in modes:
        r = measured[m]
        if not np.allclose(r.freqs, freqs):
            raise ValueError("measured sweeps must share one grid")
        cols += [f"mag_db_{m.value}", f"phase_deg_{m.value}"]
        data += [r.magnitudes_db, r.phases_deg]
    for m in sorted(analytic, key=lambda m: m.value):
        r = analytic[m]
        cols += [f"mag_db_{m.value}_analytic", f"phase_deg_{m.value}_analytic"]
        data += [
            np.interp(freqs, r.freqs, r.magnitudes_db),
            np.interp(freqs, r.freqs, r.phases_deg),
        ]
    table = np.column_stack(data)
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        np.savetxt(f, table, fmt="%.8e", delimiter=",")
