import numpy as np
import pytest

from platoonsim.control import (CONNECTED, PENDING, UNCONNECTED,
                                ControllerParams, FilterState, PlannerMode,
                                acc_command, cacc_command, caccu_command,
                                feedforward_step, filter_coefficient,
                                ovm_accel_estimate, saturate, select_planner,
                                spacing_error)

C = ControllerParams()


class TestSpacingError:
    def test_equilibrium(self):
        assert spacing_error(30.0, 25.0, 1.2) == pytest.approx(0.0)

    def test_signs(self):
        assert spacing_error(31.0, 25.0, 1.2) == pytest.approx(1.0)
        assert spacing_error(29.0, 25.0, 1.2) == pytest.approx(-1.0)


class TestPd:
    def test_proportional(self):
        assert acc_command(1.0, 0.0, C) == pytest.approx(0.3)

    def test_derivative(self):
        assert acc_command(0.0, 1.0, C) == pytest.approx(0.7)

    def test_zero(self):
        assert acc_command(0.0, 0.0, C) == pytest.approx(0.0)


class TestFeedforwardFilter:
    def test_unity_dc_gain(self):
        st = FilterState()
        for _ in range(int(15 * C.T_h / 0.1)):
            y = feedforward_step(2.5, st, 0.1, C)
        assert y == pytest.approx(2.5, abs=1e-4)

    def test_zero_input(self):
        st = FilterState()
        assert feedforward_step(0.0, st, 0.1, C) == 0.0

    def test_step_response_on_continuous_curve(self):
        # exact discretization: at t = T_h the output is 1 - e^-1 exactly
        st = FilterState()
        k = int(round(C.T_h / 0.1))
        for _ in range(k):
            y = feedforward_step(1.0, st, 0.1, C)
        assert y == pytest.approx(1.0 - np.exp(-1.0), abs=0.01)

    def test_full_curve_matches_closed_form(self):
        st = FilterState()
        dt = 0.1
        for k in range(1, 61):
            y = feedforward_step(1.0, st, dt, C)
            assert y == pytest.approx(1.0 - np.exp(-k * dt / C.T_h), abs=1e-12)


class TestCaccCommands:
    def test_zero_feedforward_equals_pd(self):
        st = FilterState()
        assert cacc_command(1.0, -0.5, 0.0, st, 0.1, C) == pytest.approx(
            acc_command(1.0, -0.5, C))

    def test_settled_feedforward_passthrough(self):
        st = FilterState()
        for _ in range(500):
            u = cacc_command(0.0, 0.0, -2.0, st, 0.1, C)
        assert u == pytest.approx(-2.0, abs=1e-4)

    def test_superposition(self):
        st = FilterState()
        for _ in range(500):
            u = cacc_command(1.0, 0.0, 1.0, st, 0.1, C)
        assert u == pytest.approx(1.3, abs=1e-4)

    def test_caccu_equilibrium_zero(self):
        st = FilterState()
        assert caccu_command(0.0, 0.0, 0.0, 0.0, st, 0.1, C) == pytest.approx(0.0)

    def test_caccu_reduces_to_pd_with_cruising_second_leader(self):
        st = FilterState()
        for _ in range(200):
            u = caccu_command(0.5, 0.1, 0.0, 0.0, st, 0.1, C)
        assert u == pytest.approx(acc_command(0.5, 0.1, C), abs=1e-6)

    def test_caccu_feeds_forward_communicated_accel(self):
        st = FilterState()
        for _ in range(500):
            u = caccu_command(0.0, 0.0, 1.5, -20.0, st, 0.1, C)
        assert u == pytest.approx(1.5, abs=1e-4)


class TestOvmEstimate:
    def test_equilibrium_zero(self):
        v = 15.0
        assert ovm_accel_estimate(C.T_ovm * v, v, 0.0, C) == pytest.approx(0.0)

    def test_beta_gain(self):
        v = 15.0
        assert ovm_accel_estimate(C.T_ovm * v, v, 1.0, C) == pytest.approx(0.51)

    def test_alpha_gain(self):
        # h/T_ovm - v = 1 with dv 0 gives alpha
        v = 15.0
        h = C.T_ovm * (v + 1.0)
        assert ovm_accel_estimate(h, v, 0.0, C) == pytest.approx(0.76)


class TestSelectPlanner:
    def test_unconnected_ego_always_radar_only(self):
        for v1 in (PENDING, CONNECTED, UNCONNECTED):
            for v2 in (PENDING, CONNECTED, UNCONNECTED):
                assert select_planner(False, True, v1, v2) is PlannerMode.ACC

    def test_connected_first_selects_cooperative(self):
        assert select_planner(True, False, CONNECTED, PENDING) is PlannerMode.CACC
        assert select_planner(True, True, CONNECTED, CONNECTED) is PlannerMode.CACC

    def test_mixed_mode_requires_capability_and_resolved_first(self):
        assert select_planner(True, True, UNCONNECTED, CONNECTED) is PlannerMode.CACCU
        assert select_planner(True, False, UNCONNECTED, CONNECTED) is PlannerMode.ACC
        assert select_planner(True, True, PENDING, CONNECTED) is PlannerMode.ACC
        assert select_planner(True, True, UNCONNECTED, UNCONNECTED) is PlannerMode.ACC


class TestSharedGains:
    def test_all_planners_share_gains(self):
        # one parameter object feeds all three command laws by construction
        st1, st2 = FilterState(), FilterState()
        e, edot = 0.7, -0.2
        base = acc_command(e, edot, C)
        assert cacc_command(e, edot, 0.0, st1, 0.1, C) == pytest.approx(base)
        assert caccu_command(e, edot, 0.0, 0.0, st2, 0.1, C) == pytest.approx(base)

    def test_saturation(self):
        assert saturate(10.0, C) == pytest.approx(4.0)
        assert saturate(-12.0, C) == pytest.approx(-8.0)


class TestFilterCoefficient:
    def test_exact_zoh(self):
        assert filter_coefficient(0.1, 1.2) == pytest.approx(1 - np.exp(-0.1 / 1.2))
