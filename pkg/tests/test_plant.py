import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viateleop import engine
from viateleop.filters import analytic_step_response
from viateleop.impedance import ImpedanceCommand
from viateleop.params import PlantParams, SystemParams
from viateleop.plant import (FREE_AIR, EnvironmentConfig, EnvironmentKind,
                             PlantState, StateCorruptionError,
                             environment_torque, step_plant, wall_at)

PARAMS = PlantParams()


def run_plant(state, motor_sp, cmd, env, n):
    for _ in range(n):
        state = step_plant(state, motor_sp, cmd, env, PARAMS)
    return state


class TestEnvironmentTorque:
    def test_free_air_is_zero(self):
        assert environment_torque(0.3, 5.0, FREE_AIR) == 0.0

    def test_penetration_spring_torque(self):
        # -10000 * 0.01 at rest
        assert environment_torque(0.51, 0.0, wall_at(0.5)) == pytest.approx(-100.0)

    def test_no_penetration_no_torque(self):
        assert environment_torque(0.49, 10.0, wall_at(0.5)) == 0.0

    def test_wall_never_pulls(self):
        # fast withdrawal while still penetrated: damper would pull inward
        tq = environment_torque(0.501, -20.0, wall_at(0.5))
        assert tq == 0.0

    @given(theta=st.floats(-1, 1), omega=st.floats(-50, 50))
    @settings(max_examples=200, deadline=None)
    def test_one_sided_contact(self, theta, omega):
        tq = environment_torque(theta, omega, wall_at(0.2))
        assert tq <= 0.0
        if theta <= 0.2:
            assert tq == 0.0

    def test_wall_requires_finite_position(self):
        with pytest.raises(ValueError):
            EnvironmentConfig(EnvironmentKind.WALL, float("nan"))


class TestStepPlant:
    def test_equilibrium_fixed_point(self):
        state = PlantState.at_rest(0.0, k=100.0, b=0.8)
        cmd = ImpedanceCommand(100.0, 0.8)
        out = run_plant(state, 0.0, cmd, FREE_AIR, 200)
        assert out.theta_out == 0.0
        assert out.omega_out == 0.0
        assert out.k_actual == pytest.approx(100.0, abs=1e-9)

    def test_free_oscillation_frequency(self):
        # displaced output on a k=10 spring: f = sqrt(k/m)/2pi = 4.50 Hz
        state = PlantState.at_rest(0.0, k=10.0, b=0.0)
        state.raw[engine.S_THETA_OUT] = 0.1
        cmd = ImpedanceCommand(10.0, 0.0)
        thetas = []
        for _ in range(4000):
            state = step_plant(state, 0.0, cmd, FREE_AIR, PARAMS)
            thetas.append(state.theta_out)
        thetas = np.array(thetas)
        crossings = np.nonzero(np.diff(np.sign(thetas)))[0]
        period = 2.0 * np.mean(np.diff(crossings)) * PARAMS.control_dt
        measured = 1.0 / period
        expected = math.sqrt(10.0 / 0.0125) / (2 * math.pi)
        assert measured == pytest.approx(expected, abs=0.05)
        assert expected == pytest.approx(4.50, abs=0.01)

    def test_motor_step_response_matches_butterworth(self):
        # stiff coupling: the filtered motor position is the plant's
        # internal state regardless, compare against the closed form
        state = PlantState.at_rest(0.0, k=100.0, b=0.8)
        cmd = ImpedanceCommand(10000.0, 0.8)
        motor = []
        n = 500
        for _ in range(n):
            state = step_plant(state, 1.0, cmd, FREE_AIR, PARAMS)
            motor.append(state.theta_motor)
        t = (np.arange(n) + 1) * PARAMS.control_dt
        expected = analytic_step_response(20.0, t)
        assert np.max(np.abs(np.array(motor) - expected)) < 1e-3

    def test_impedance_follows_10hz_filter(self):
        state = PlantState.at_rest(0.0, k=10.0, b=0.01)
        cmd = ImpedanceCommand(100.0, 0.8)
        ks = []
        n = 500
        for _ in range(n):
            state = step_plant(state, 0.0, cmd, FREE_AIR, PARAMS)
            ks.append(state.k_actual)
        t = (np.arange(n) + 1) * PARAMS.control_dt
        expected = 10.0 + 90.0 * analytic_step_response(10.0, t)
        assert np.max(np.abs(np.array(ks) - expected)) < 0.5

    def test_rejects_non_finite_state(self):
        state = PlantState.at_rest(0.0)
        state.raw[engine.S_OMEGA_OUT] = float("nan")
        with pytest.raises(StateCorruptionError):
            step_plant(state, 0.0, ImpedanceCommand(100.0, 0.8), FREE_AIR, PARAMS)

    def test_rejects_negative_impedance(self):
        with pytest.raises(ValueError):
            ImpedanceCommand(-5.0, 0.1)

    def test_determinism_bit_identical(self):
        def run():
            state = PlantState.at_rest(0.1, k=40.0, b=0.2)
            out = []
            for i in range(300):
                cmd = ImpedanceCommand(40.0 + 10 * math.sin(0.01 * i), 0.2)
                state = step_plant(state, 0.05 * math.sin(0.02 * i), cmd,
                                   wall_at(0.12), PARAMS)
                out.append(state.raw.copy())
            return np.array(out)

        a, b = run(), run()
        assert np.array_equal(a, b)


def total_energy(state: PlantState, params: PlantParams) -> float:
    deflection = state.theta_motor - state.theta_out
    return (0.5 * params.inertia * state.omega_out**2
            + 0.5 * state.k_actual * deflection**2)


class TestPassivity:
    @given(
        displacement=st.floats(-0.5, 0.5),
        k=st.floats(1.0, 100.0),
        b=st.floats(0.0, 0.8),
    )
    @settings(max_examples=40, deadline=None)
    def test_free_plant_energy_non_increasing(self, displacement, k, b):
        state = PlantState.at_rest(0.0, k=k, b=b)
        state.raw[engine.S_THETA_OUT] = displacement
        cmd = ImpedanceCommand(k, b)
        energy = total_energy(state, PARAMS)
        for _ in range(300):
            state = step_plant(state, 0.0, cmd, FREE_AIR, PARAMS)
            new_energy = total_energy(state, PARAMS)
            assert new_energy <= energy + 1e-6
            energy = new_energy

    def test_wall_contact_does_not_stick(self):
        # drive the output into the wall, then release: it must come back out
        state = PlantState.at_rest(0.4, k=100.0, b=0.8)
        state.raw[engine.S_OMEGA_OUT] = 8.0
        cmd = ImpedanceCommand(100.0, 0.8)
        env = wall_at(0.45)
        max_pen, after = 0.0, []
        for i in range(800):
            state = step_plant(state, 0.4, cmd, env, PARAMS)
            max_pen = max(max_pen, state.theta_out - 0.45)
            if i > 400:
                after.append(state.theta_out)
        assert max_pen > 0.0  # it did hit
        assert np.all(np.array(after) < 0.45 + 1e-9)  # and it came back out
