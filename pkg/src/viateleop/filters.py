"""Standalone second-order Butterworth low-pass with a derivative output.

Same coefficients and stepping kernel as the actuator models inside the
simulation engine; this class exists so the filter can be probed and
reused on its own (unit DC gain, -3 dB at the cutoff, derivative state
available without finite differencing).
"""

from __future__ import annotations

import math

import numpy as np

from . import engine


class SecondOrderLowPass:
    def __init__(self, cutoff_hz: float, dt: float):
        if not cutoff_hz > 0:
            raise ValueError("cutoff must be positive")
        if not 0 < dt < 0.5 / cutoff_hz:
            raise ValueError("dt must resolve the cutoff (below Nyquist)")
        self.cutoff_hz = cutoff_hz
        self.dt = dt
        self._coeffs = engine.butterworth_coeffs(cutoff_hz, dt)
        self._state = np.zeros(3)  # y, dy, previous input

    @property
    def output(self) -> float:
        return float(self._state[0])

    @property
    def derivative(self) -> float:
        return float(self._state[1])

    def reset(self, value: float = 0.0) -> None:
        self._state[0] = value
        self._state[1] = 0.0
        self._state[2] = value

    def step(self, u: float) -> float:
        engine._filter_step(self._state, self._coeffs, 0, 0, u)
        return float(self._state[0])

    def run(self, inputs) -> np.ndarray:
        return np.array([self.step(float(u)) for u in inputs])


def analytic_magnitude(cutoff_hz: float, freq_hz: float) -> float:
    """|H| of the continuous second-order Butterworth."""
    r = freq_hz / cutoff_hz
    return 1.0 / math.sqrt(1.0 + r**4)


def analytic_step_response(cutoff_hz: float, t) -> np.ndarray:
    """Closed-form unit step response (zeta = sqrt(2)/2)."""
    w = 2.0 * math.pi * cutoff_hz
    a = w / math.sqrt(2.0)
    t = np.asarray(t, dtype=float)
    return 1.0 - np.exp(-a * t) * (np.cos(a * t) + np.sin(a * t))
