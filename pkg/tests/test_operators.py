import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viateleop.operators import (Coupling, MinJerkReach, OperatorModel,
                                 Playback, StrikeProfile, default_backswing,
                                 make_cohort, make_virtual_participant,
                                 min_jerk)

DT = 1e-3


class TestMinJerk:
    def test_rest_start(self):
        assert min_jerk(0.0, 0.3, 0.3) == (0.0, 0.0)

    def test_rest_end(self):
        pos, vel = min_jerk(0.3, 0.3, 0.3)
        assert pos == pytest.approx(0.3)
        assert vel == pytest.approx(0.0)

    def test_midpoint_peak_velocity(self):
        pos, vel = min_jerk(0.15, 0.3, 0.3)
        assert pos == pytest.approx(0.15)
        assert vel == pytest.approx(1.875)  # 15/8 * d / T

    def test_holds_outside_window(self):
        assert min_jerk(-1.0, 0.3, 0.3) == (0.0, 0.0)
        assert min_jerk(5.0, 0.3, 0.3)[0] == pytest.approx(0.3)

    def test_rejects_bad_duration(self):
        with pytest.raises(ValueError):
            min_jerk(0.1, 0.3, 0.0)


def finite_difference_check(motion, ts, h=1e-5):
    """Central difference of position vs reported velocity at points ts.

    ts must avoid the phase joints (acceleration steps there make any
    finite difference second-order inaccurate); away from them the match
    must be at numerical-derivative precision.
    """
    ts = np.asarray(ts)
    _, vel = motion.sample(ts)
    pos_p, _ = motion.sample(ts + h)
    pos_m, _ = motion.sample(ts - h)
    return np.max(np.abs(vel - (pos_p - pos_m) / (2 * h)))


class TestStrikeProfile:
    def test_peak_velocity_by_construction(self):
        prof = StrikeProfile(backswing=0.1, strike_frequency=4.5,
                             peak_handle_velocity=5.0, start=0.25)
        t = np.arange(0.0, 1.0, 1e-4)
        _, vel = prof.sample(t)
        assert np.max(vel) == pytest.approx(5.0, rel=0.01)

    def test_backswing_depth(self):
        prof = StrikeProfile(backswing=0.12, strike_frequency=4.0,
                             peak_handle_velocity=4.0, start=0.2)
        t = np.arange(0.0, 1.0, 1e-4)
        pos, _ = prof.sample(t)
        assert np.min(pos) == pytest.approx(0.2 - 0.12, abs=1e-9)

    def test_ends_past_the_start(self):
        prof = StrikeProfile(backswing=0.08, strike_frequency=4.5,
                             peak_handle_velocity=5.0, start=0.27)
        t = np.arange(0.0, 2.0, 1e-3)
        pos, vel = prof.sample(t)
        assert pos[-1] > 0.27     # follow-through crosses the start
        assert vel[-1] == 0.0

    def test_velocity_is_position_derivative(self):
        prof = StrikeProfile(backswing=0.1, strike_frequency=4.5,
                             peak_handle_velocity=5.0, start=0.25,
                             start_time=0.1)
        half = 0.5 / prof.strike_frequency
        joints = np.array([0.1, 0.1 + half, 0.1 + 2 * half])
        ts = np.linspace(0.0, 0.8, 1601)
        away = np.all(np.abs(ts[:, None] - joints[None, :]) > 1e-3, axis=1)
        assert finite_difference_check(prof, ts[away]) < 1e-6

    def test_velocity_continuous_across_joints(self):
        prof = StrikeProfile(backswing=0.1, strike_frequency=4.5,
                             peak_handle_velocity=5.0, start=0.25,
                             start_time=0.1)
        half = 0.5 / prof.strike_frequency
        for joint in (0.1, 0.1 + half, 0.1 + 2 * half):
            t = np.array([joint - 1e-7, joint + 1e-7])
            _, vel = prof.sample(t)
            assert abs(vel[1] - vel[0]) < 1e-4

    def test_validation(self):
        with pytest.raises(ValueError):
            StrikeProfile(strike_frequency=0.0)
        with pytest.raises(ValueError):
            StrikeProfile(peak_handle_velocity=-1.0)
        with pytest.raises(ValueError):
            StrikeProfile(backswing=-0.1)


class TestPlayback:
    def test_interpolates_to_grid(self):
        pb = Playback(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.2, 0.1]))
        t = np.array([0.25, 0.75])
        pos, vel = pb.sample(t)
        assert pos == pytest.approx([0.1, 0.15])
        assert vel == pytest.approx([0.4, -0.2])

    def test_holds_before_and_after(self):
        pb = Playback(np.array([0.0, 1.0]), np.array([0.1, 0.3]))
        pos, vel = pb.sample(np.array([-0.5, 1.5]))
        assert pos == pytest.approx([0.1, 0.3])
        assert vel == pytest.approx([0.0, 0.0])

    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "traj.csv"
        path.write_text("t,position\n0.0,0.0\n0.5,0.2\n1.0,0.1\n")
        pb = Playback.from_csv(path)
        assert pb.sample(np.array([0.5]))[0] == pytest.approx([0.2])

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            Playback(np.array([0.0, 0.0, 1.0]), np.array([1.0, 2.0, 3.0]))


class TestMinJerkReachModel:
    def test_velocity_is_position_derivative(self):
        reach = MinJerkReach(distance=0.3, duration=0.25, start=0.1,
                             start_time=0.2)
        joints = np.array([0.2, 0.45])
        ts = np.linspace(0.0, 0.8, 1601)
        away = np.all(np.abs(ts[:, None] - joints[None, :]) > 1e-3, axis=1)
        assert finite_difference_check(reach, ts[away]) < 1e-6

    def test_start_offset_applied(self):
        reach = MinJerkReach(distance=0.3, duration=0.25, start=-0.1,
                             start_time=0.2)
        pos, vel = reach.sample(np.array([0.0, 10.0]))
        assert pos == pytest.approx([-0.1, 0.2])


class TestVirtualParticipants:
    def test_same_seed_identical(self):
        assert make_virtual_participant(5) == make_virtual_participant(5)

    def test_distinct_across_seeds(self):
        cohort = [make_virtual_participant(s) for s in range(1, 25)]
        tuples = {(p.reach_duration, p.strike_frequency,
                   p.peak_strike_velocity) for p in cohort}
        assert len(tuples) == 24

    def test_parameters_within_band(self):
        cohort = make_cohort(24, master_seed=7)
        freqs = np.array([p.strike_frequency for p in cohort])
        assert np.all(freqs >= 4.5 * 0.8) and np.all(freqs <= 4.5 * 1.2)
        assert 4.5 * 0.8 <= np.median(freqs) <= 4.5 * 1.2
        durs = np.array([p.reach_duration for p in cohort])
        assert np.all(durs >= 0.25 * 0.8) and np.all(durs <= 0.25 * 1.2)

    def test_cohort_deterministic(self):
        a = make_cohort(24, master_seed=7)
        b = make_cohort(24, master_seed=7)
        assert a == b

    @given(seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_jitter_always_in_band(self, seed):
        p = make_virtual_participant(seed)
        assert 0.8 * 4.5 <= p.strike_frequency <= 1.2 * 4.5
        assert 0.8 * 6.0 <= p.peak_strike_velocity <= 1.2 * 6.0

    def test_strike_model_uses_calibrated_backswing(self):
        vp = make_virtual_participant(3)
        model = vp.strike(start=0.27)
        prof = model.motion
        assert prof.backswing == pytest.approx(default_backswing(prof))
        assert model.coupling is Coupling.KINEMATIC
