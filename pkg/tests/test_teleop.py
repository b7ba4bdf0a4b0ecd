import math

import numpy as np
import pytest

from viateleop import engine
from viateleop.impedance import Mode
from viateleop.operators import (ArmImpedance, Coupling, MinJerkReach,
                                 OperatorModel, Playback)
from viateleop.params import CouplingGains, SystemParams
from viateleop.plant import FREE_AIR, PlantState, wall_at
from viateleop.teleop import (HandleState, ScenarioSpec, Trace, run_trace,
                              step_teleop)


def kinematic(motion):
    return OperatorModel(motion, coupling=Coupling.KINEMATIC)


def hold_at(pos):
    return Playback(np.array([0.0, 1e6]), np.array([pos, pos]))


class TestStepTeleop:
    def test_rest_equilibrium(self):
        handle = HandleState()
        plant = PlantState.at_rest(0.0, k=100.0, b=0.8)
        for i in range(100):
            handle, plant, frame = step_teleop(
                handle, plant, Mode.HIGH, FREE_AIR, (0.0, 0.0), (0.0, 0.0),
                t=i * 1e-3)
            assert frame.theta_out == 0.0
            assert frame.feedback_torque == 0.0

    def test_slow_ramp_keeps_adaptive_stiff(self):
        # |vm| = 0.1 rad/s < v_min: the law must pin k at 100
        handle = HandleState()
        plant = PlantState.at_rest(0.0, k=100.0, b=0.8)
        for i in range(500):
            ref = (0.1 * i * 1e-3, 0.1)
            ref_next = (0.1 * (i + 1) * 1e-3, 0.1)
            handle, plant, frame = step_teleop(
                handle, plant, Mode.ADAPTIVE, FREE_AIR, ref, ref_next,
                t=i * 1e-3)
            assert frame.k_set == 100.0

    def test_matches_run_trace_bit_for_bit(self):
        motion = MinJerkReach(distance=0.3, duration=0.25, start_time=0.05)
        scenario = ScenarioSpec(duration=0.5, operator=kinematic(motion),
                                mode=Mode.ADAPTIVE)
        trace = run_trace(scenario)
        t_grid = np.arange(501) * 1e-3
        pos, vel = motion.sample(t_grid)
        handle = HandleState(theta=pos[0], omega=vel[0])
        plant = PlantState.at_rest(pos[0], k=100.0, b=0.8)
        for i in range(500):
            handle, plant, frame = step_teleop(
                handle, plant, Mode.ADAPTIVE, FREE_AIR,
                (pos[i], vel[i]), (pos[i + 1], vel[i + 1]), t=i * 1e-3)
            assert np.array_equal(np.array([
                frame.t, frame.theta_m, frame.omega_m, frame.motor_setpoint,
                frame.theta_motor, frame.theta_out, frame.omega_out,
                frame.k_set, frame.b_set, frame.k_actual, frame.b_actual,
                frame.env_torque, frame.feedback_torque,
            ]), trace.frames[i])


class TestRunTrace:
    def test_exact_frame_count(self):
        trace = run_trace(ScenarioSpec(duration=1.0,
                                       operator=kinematic(hold_at(0.0))))
        assert len(trace) == 1000

    def test_duration_must_be_positive(self):
        with pytest.raises(ValueError):
            ScenarioSpec(duration=0.0, operator=kinematic(hold_at(0.0)))

    def test_identical_csv_bytes(self):
        motion = MinJerkReach(distance=0.3, duration=0.25, start_time=0.1)
        spec = ScenarioSpec(duration=1.0, operator=kinematic(motion),
                            mode=Mode.LOW)
        a = run_trace(spec).to_csv_bytes()
        b = run_trace(spec).to_csv_bytes()
        assert a == b

    def test_low_mode_rings_after_high_mode_settles(self):
        motion = MinJerkReach(distance=0.3, duration=0.25, start_time=0.1)
        low = run_trace(ScenarioSpec(duration=2.0, operator=kinematic(motion),
                                     mode=Mode.LOW))
        high = run_trace(ScenarioSpec(duration=2.0, operator=kinematic(motion),
                                      mode=Mode.HIGH))
        late = slice(800, None)  # well after the high trace has settled
        err_high = np.abs(high.col("theta_out")[late] - 0.3)
        err_low = np.abs(low.col("theta_out")[late] - 0.3)
        assert np.max(err_high) < 0.005
        assert np.max(err_low) > 0.03

    def test_feedback_zero_when_tracking_and_free(self):
        trace = run_trace(ScenarioSpec(duration=0.5,
                                       operator=kinematic(hold_at(0.2)),
                                       mode=Mode.HIGH,
                                       start_theta=0.2))
        assert np.allclose(trace.col("feedback_torque"), 0.0, atol=1e-12)

    def test_integrator_clamp_never_exceeded(self):
        # hold the handle inside the wall: sustained error winds the PI up
        gains = CouplingGains()
        system = SystemParams(gains=gains)
        trace = run_trace(ScenarioSpec(
            duration=3.0, operator=kinematic(hold_at(0.4)), mode=Mode.HIGH,
            env=wall_at(0.1), system=system, start_theta=0.0))
        # feedback = p*e + clamped integral - c2*env; bound the integral part
        e = trace.col("theta_out") - trace.col("theta_m")
        integral_part = (trace.col("feedback_torque") - gains.p_gain * e
                         + gains.c2 * trace.col("env_torque"))
        assert np.max(np.abs(integral_part)) <= gains.integrator_clamp + 1e-9

    def test_superposition_in_linear_high_mode(self):
        # c2 = 0, wall off, dynamic coupling: the loop is LTI
        gains = CouplingGains(c2=0.0)
        system = SystemParams(gains=gains)

        def trace_for(motion):
            op = OperatorModel(motion, coupling=Coupling.DYNAMIC,
                               arm=ArmImpedance())
            return run_trace(ScenarioSpec(
                duration=1.5, operator=op, mode=Mode.HIGH, system=system,
                start_theta=0.0))

        m1 = MinJerkReach(distance=0.08, duration=0.3, start_time=0.1)
        m2 = Playback(np.array([0.0, 0.2, 0.6, 1.5]),
                      np.array([0.0, 0.0, 0.05, 0.05]))

        class Sum:
            def sample(self, t):
                p1, v1 = m1.sample(t)
                p2, v2 = m2.sample(t)
                return p1 + p2, v1 + v2

        out = (trace_for(m1).col("theta_out") + trace_for(m2).col("theta_out")
               - trace_for(Sum()).col("theta_out"))
        assert np.max(np.abs(out)) < 1e-6

    def test_mode_switch_keeps_positions_continuous(self):
        # run H then continue the same state under L: no teleports
        motion = MinJerkReach(distance=0.2, duration=0.3, start_time=0.0)
        t_grid = np.arange(1001) * 1e-3
        pos, vel = motion.sample(t_grid)
        handle = HandleState(theta=pos[0], omega=vel[0])
        plant = PlantState.at_rest(0.0, k=100.0, b=0.8)
        thetas = []
        for i in range(1000):
            mode = Mode.HIGH if i < 500 else Mode.LOW
            handle, plant, frame = step_teleop(
                handle, plant, mode, FREE_AIR,
                (pos[i], vel[i]), (pos[i + 1], vel[i + 1]), t=i * 1e-3)
            thetas.append(frame.theta_out)
        jumps = np.abs(np.diff(thetas))
        assert np.max(jumps) < 0.01  # bounded by physical velocity * dt

    def test_stiff_arm_with_no_feedback_converges_to_kinematic(self):
        # kill the feedback path and stiffen the arm: the dynamic handle
        # must follow the reference like the kinematic one
        gains = CouplingGains(p_gain=0.0, i_gain=0.0, c2=0.0)
        arm = ArmImpedance(k_arm=3000.0, b_arm=12.0)
        system = SystemParams(gains=gains)
        motion = MinJerkReach(distance=0.3, duration=0.3, start_time=0.2)
        dyn = run_trace(ScenarioSpec(
            duration=1.5, operator=OperatorModel(motion, Coupling.DYNAMIC, arm),
            mode=Mode.HIGH, system=system, start_theta=0.0))
        kin = run_trace(ScenarioSpec(
            duration=1.5, operator=kinematic(motion), mode=Mode.HIGH,
            system=system, start_theta=0.0))
        diff = np.abs(dyn.col("theta_m") - kin.col("theta_m"))
        assert np.max(diff) < 0.01

    def test_analytic_closed_loop_gain_at_low_frequency(self):
        # 0.2 Hz sine, mode H: steady-state magnitude within 2 % of the
        # continuous linear model of motor filter + spring-damper/inertia
        f = 0.2
        w = 2 * math.pi * f

        class Sine:
            def sample(self, t):
                return 0.1 * np.sin(w * t), 0.1 * w * np.cos(w * t)

        trace = run_trace(ScenarioSpec(duration=15.0,
                                       operator=kinematic(Sine()),
                                       mode=Mode.HIGH))
        seg = trace.frames[5000:]
        probe = np.exp(-1j * w * seg[:, 0])
        h = np.sum(seg[:, 5] * probe) / np.sum(seg[:, 1] * probe)
        wc = 2 * math.pi * 20.0
        s = 1j * w
        motor = wc**2 / (s**2 + math.sqrt(2) * wc * s + wc**2)
        coupling = (0.8 * s + 100.0) / (0.0125 * s**2 + 0.8 * s + 100.0)
        assert abs(h) == pytest.approx(abs(motor * coupling), rel=0.02)


class TestTraceCsv:
    def test_roundtrip_through_csv(self, tmp_path):
        trace = run_trace(ScenarioSpec(
            duration=0.3,
            operator=kinematic(MinJerkReach(distance=0.2, duration=0.2)),
            mode=Mode.ADAPTIVE))
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        back = Trace.from_csv(path)
        assert back.columns == trace.columns
        assert np.allclose(back.frames, trace.frames, rtol=1e-8, atol=1e-12)

    def test_gzip_roundtrip(self, tmp_path):
        trace = run_trace(ScenarioSpec(duration=0.2,
                                       operator=kinematic(hold_at(0.1))))
        path = tmp_path / "trace.csv.gz"
        trace.to_csv(path)
        back = Trace.from_csv(path)
        assert len(back) == len(trace)

    def test_header_is_the_column_contract(self, tmp_path):
        trace = run_trace(ScenarioSpec(duration=0.05,
                                       operator=kinematic(hold_at(0.0))))
        path = tmp_path / "t.csv"
        trace.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == ("t,theta_m,omega_m,motor_setpoint,theta_motor,"
                          "theta_out,omega_out,k_set,b_set,k_actual,"
                          "b_actual,env_torque,feedback_torque")

    def test_nine_significant_digits(self, tmp_path):
        trace = run_trace(ScenarioSpec(duration=0.05,
                                       operator=kinematic(hold_at(0.123456789))))
        path = tmp_path / "t.csv"
        trace.to_csv(path)
        row = path.read_text().splitlines()[1].split(",")
        assert row[1] == "1.23456789e-01"
