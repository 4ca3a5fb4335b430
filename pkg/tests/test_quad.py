import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dreamrace.errors import ConfigurationError, NumericError
from dreamrace.quad import (
    CtbrCommand,
    QuadParams,
    QuadState,
    derivative,
    hover_action,
    map_action,
    quat_from_axis_angle,
    quat_mul,
    quat_to_matrix,
    step_rk4,
)

PARAMS = QuadParams()


def integrate(s, u, dt, horizon):
    n = int(round(horizon / dt))
    for _ in range(n):
        s = step_rk4(s, u, dt, PARAMS)
    return s


class TestDerivative:
    def test_hover(self):
        d = derivative(QuadState.hover_at([0, 0, 1]), CtbrCommand(9.81, [0, 0, 0]), PARAMS)
        np.testing.assert_array_equal(d[7:], 0.0)

    def test_free_fall(self):
        d = derivative(QuadState.hover_at([0, 0, 1]), CtbrCommand(0.0, [0, 0, 0]), PARAMS)
        np.testing.assert_array_equal(d[7:], [0.0, 0.0, -9.81])

    def test_rolled_ninety_degrees(self):
        q = quat_from_axis_angle([1, 0, 0], math.pi / 2)
        d = derivative(QuadState([0, 0, 1], q, [0, 0, 0]), CtbrCommand(9.81, [0, 0, 0]), PARAMS)
        # oracle: rotate the body thrust vector by the attitude matrix
        expected = np.array([0, 0, -9.81]) + quat_to_matrix(q) @ np.array([0, 0, 9.81])
        np.testing.assert_allclose(d[7:], expected, atol=1e-12)
        np.testing.assert_allclose(d[7:], [0.0, -9.81, -9.81], atol=1e-12)

    def test_quaternion_rate(self):
        q = quat_from_axis_angle([0.3, -0.2, 0.9], 0.7)
        w = np.array([0.4, -1.1, 2.0])
        d = derivative(QuadState([0, 0, 0], q, [0, 0, 0]), CtbrCommand(0.0, w), PARAMS)
        np.testing.assert_allclose(d[3:7], 0.5 * quat_mul(q, [0.0, *w]), atol=1e-15)


class TestRK4:
    def test_hover_is_stationary(self):
        s0 = QuadState.hover_at([1.0, -2.0, 3.0])
        s = integrate(s0, CtbrCommand(9.81, [0, 0, 0]), 0.02, 20.0)
        assert np.linalg.norm(s.p - s0.p) < 1e-9

    def test_pure_yaw_matches_axis_angle(self):
        dt = 0.02
        n = 25  # pi rad/s for 0.5 s
        s = QuadState.hover_at([0, 0, 1])
        for _ in range(n):
            s = step_rk4(s, CtbrCommand(9.81, [0, 0, math.pi]), dt, PARAMS)
        np.testing.assert_allclose(s.q, quat_from_axis_angle([0, 0, 1], math.pi / 2), atol=1e-6)

    def test_fourth_order_convergence(self):
        s0 = QuadState.hover_at([0, 0, 2])
        u = CtbrCommand(12.0, [0.8, -0.5, 1.2])
        ref = integrate(s0, u, 0.1 / 16, 2.0)
        err = [np.linalg.norm(integrate(s0, u, dt, 2.0).p - ref.p) for dt in (0.1, 0.05)]
        order = math.log2(err[0] / err[1])
        assert order >= 3.5, order

    def test_dt_positive(self):
        with pytest.raises(ValueError):
            step_rk4(QuadState.hover_at([0, 0, 0]), CtbrCommand(0, [0, 0, 0]), 0.0, PARAMS)

    def test_nonfinite_state(self):
        s = QuadState([np.inf, 0, 0], [1, 0, 0, 0], [0, 0, 0])
        with pytest.raises(NumericError):
            step_rk4(s, CtbrCommand(0, [0, 0, 0]), 0.02, PARAMS)

    def test_ballistic_motion(self):
        s0 = QuadState([0, 0, 100], [1, 0, 0, 0], [1.5, -0.5, 2.0])
        s = integrate(s0, CtbrCommand(0.0, [0, 0, 0]), 0.02, 3.0)
        np.testing.assert_allclose(s.v[:2], [1.5, -0.5], atol=1e-12)
        assert s.v[2] == pytest.approx(2.0 - 9.81 * 3.0, abs=1e-9)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_quaternion_norm_under_random_commands(seed):
    rng = np.random.default_rng(seed)
    s = QuadState.hover_at([0, 0, 0])
    for _ in range(2000):
        u = map_action(rng.uniform(-1, 1, 4), PARAMS)
        s = step_rk4(s, u, 0.02, PARAMS)
        assert abs(np.linalg.norm(s.q) - 1.0) < 1e-9


class TestMapAction:
    def test_lower_bound(self):
        c = map_action([-1, 0, 0, 0], PARAMS)
        assert c.f_T == 0.0
        np.testing.assert_array_equal(c.omega, 0.0)

    def test_full_thrust(self):
        assert map_action([1, 0, 0, 0], PARAMS).f_T == pytest.approx(2.7 * 9.81, abs=1e-12)
        assert map_action([1, 0, 0, 0], PARAMS).f_T == pytest.approx(26.487, abs=1e-9)

    def test_midpoint_and_roll_rate(self):
        c = map_action([0, 1, 0, 0], PARAMS)
        np.testing.assert_array_equal(c.omega, [6.0, 0.0, 0.0])
        assert c.f_T == pytest.approx(13.2435, abs=1e-9)

    def test_clamp_counted(self):
        diag = {}
        c = map_action([2.0, -3.0, 0, 0], PARAMS, diag)
        assert diag["clamped"] == 1
        assert c.f_T == pytest.approx(PARAMS.f_T_max)
        assert c.omega[0] == -6.0
        map_action([0.2, 0, 0, 0], PARAMS, diag)
        assert diag["clamped"] == 1

    def test_hover_action_hovers(self):
        assert map_action(hover_action(PARAMS), PARAMS).f_T == pytest.approx(9.81)


class TestParams:
    def test_published_platform_is_consistent(self):
        assert PARAMS.f_T_max * PARAMS.mass <= 4 * PARAMS.max_rotor_thrust
        assert PARAMS.thrust_to_weight == pytest.approx(2.7)
        # four 4 N rotors lifting 0.6 kg give the reported limit of about 2.7
        assert 4 * 4.0 / (0.6 * 9.81) == pytest.approx(2.72, abs=0.01)

    def test_rejects_thrust_beyond_rotors(self):
        with pytest.raises(ConfigurationError):
            QuadParams(f_T_max=40.0)

    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ConfigurationError):
            QuadParams(mass=0.0)
