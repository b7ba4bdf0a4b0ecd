import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viateleop.impedance import (ImpedanceCommand, Mode, damping_law,
                                 impedance_for_mode, stiffness_law)
from viateleop.params import AdaptiveLawParams

LAW = AdaptiveLawParams()

finite_vel = st.floats(allow_nan=False, allow_infinity=False,
                       min_value=-1e6, max_value=1e6)


class TestStiffnessLaw:
    def test_endpoint_at_vmin(self):
        assert stiffness_law(1.0, LAW) == 100.0

    def test_capped_below_vmin(self):
        assert stiffness_law(0.2, LAW) == 100.0

    def test_hand_derived_at_vmax(self):
        # (100 - 10) * exp(-6) + 10
        assert stiffness_law(6.0, LAW) == pytest.approx(10.2231, abs=1e-3)
        assert stiffness_law(6.0, LAW) == pytest.approx(90 * math.exp(-6) + 10,
                                                        abs=1e-12)

    @given(v1=finite_vel, v2=finite_vel)
    @settings(max_examples=200, deadline=None)
    def test_monotone_nonincreasing_in_speed(self, v1, v2):
        if abs(v1) > abs(v2):
            v1, v2 = v2, v1
        assert stiffness_law(v1, LAW) >= stiffness_law(v2, LAW)

    @given(v=finite_vel)
    @settings(max_examples=200, deadline=None)
    def test_bounds_and_symmetry(self, v):
        k = stiffness_law(v, LAW)
        assert LAW.k_min <= k <= LAW.k_max
        assert k == stiffness_law(-v, LAW)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            stiffness_law(float("nan"), LAW)


class TestDampingLaw:
    def test_capped_at_vmin(self):
        # 2 * 0.7 * sqrt(100 * 0.0125) = 1.565... -> cap 0.8
        assert damping_law(1.0, LAW) == 0.8

    def test_capped_at_zero_velocity(self):
        assert damping_law(0.0, LAW) == 0.8

    def test_hand_derived_at_vmax(self):
        d = (0.7 - 0.01) * math.exp(-6) + 0.01
        k = 90 * math.exp(-6) + 10
        expected = 2 * d * math.sqrt(k * 0.0125)
        assert damping_law(6.0, LAW) == pytest.approx(0.008372, abs=1e-5)
        assert damping_law(6.0, LAW) == pytest.approx(expected, abs=1e-12)

    @given(v1=finite_vel, v2=finite_vel)
    @settings(max_examples=200, deadline=None)
    def test_monotone_nonincreasing_in_speed(self, v1, v2):
        if abs(v1) > abs(v2):
            v1, v2 = v2, v1
        assert damping_law(v1, LAW) >= damping_law(v2, LAW)

    @given(v=finite_vel)
    @settings(max_examples=200, deadline=None)
    def test_bounds_and_symmetry(self, v):
        b = damping_law(v, LAW)
        assert 0.0 < b <= LAW.b_cap
        assert b == damping_law(-v, LAW)


class TestModeTable:
    def test_high_constants(self):
        cmd = impedance_for_mode(Mode.HIGH, 5.0, LAW)
        assert (cmd.k, cmd.b) == (100.0, 0.8)

    def test_low_constants(self):
        cmd = impedance_for_mode(Mode.LOW, 0.0, LAW)
        assert (cmd.k, cmd.b) == (10.0, 0.01)

    def test_adaptive_equals_high_at_precision_speed(self):
        cmd = impedance_for_mode(Mode.ADAPTIVE, 1.0, LAW)
        high = impedance_for_mode(Mode.HIGH, 1.0, LAW)
        assert (cmd.k, cmd.b) == (high.k, high.b)

    @given(v=finite_vel)
    @settings(max_examples=100, deadline=None)
    def test_high_low_independent_of_velocity(self, v):
        assert impedance_for_mode(Mode.HIGH, v, LAW) == impedance_for_mode(
            Mode.HIGH, 0.0, LAW)
        assert impedance_for_mode(Mode.LOW, v, LAW) == impedance_for_mode(
            Mode.LOW, 0.0, LAW)


def test_continuity_on_dense_grid():
    v = np.linspace(0.0, 10.0, 20_001)
    k = np.array([stiffness_law(x, LAW) for x in v])
    b = np.array([damping_law(x, LAW) for x in v])
    assert np.max(np.abs(np.diff(k))) < 0.06
    assert np.max(np.abs(np.diff(b))) < 1e-3


def test_command_validation():
    with pytest.raises(ValueError):
        ImpedanceCommand(-1.0, 0.1)
    with pytest.raises(ValueError):
        ImpedanceCommand(float("inf"), 0.1)
