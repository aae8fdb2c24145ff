import numpy as np
import pytest

from platoonsim.core import World
from platoonsim.human import HumanParams, idm_accel
from platoonsim.lanechange import (MobilParams, ProspectiveAccels,
                                   SideEvaluation, execute_lane_change,
                                   lc_decide, mobil_incentive, mobil_safety,
                                   platoon_size, predicted_accels)

M = MobilParams()
HP = HumanParams()


def world(positions, lanes, speeds=None, accels=None, n_lanes=3):
    n = len(positions)
    speeds = np.full(n, 15.0) if speeds is None else np.asarray(speeds, float)
    accels = np.zeros(n) if accels is None else np.asarray(accels, float)
    return World(np.asarray(positions, float), speeds, accels,
                 np.asarray(lanes), n_lanes)


class TestSafety:
    def test_bound(self):
        assert mobil_safety(-3.9, M)
        assert not mobil_safety(-4.1, M)

    def test_absent_follower_is_safe(self):
        assert mobil_safety(None, M)

    def test_b_safe_sign_enforced(self):
        with pytest.raises(ValueError):
            MobilParams(b_safe=4.0)


def accels(a=0.0, a_tilde=0.0, a_n=None, a_n_tilde=None, a_n_tilde_ss=None,
           a_o=None, a_o_tilde=None, feasible=True):
    return ProspectiveAccels(a, a_tilde, a_n, a_n_tilde, a_n_tilde_ss,
                             a_o, a_o_tilde, feasible)


class TestIncentive:
    def test_egoistic_with_zero_politeness(self):
        p = MobilParams(politeness=0.0)
        value, ok = mobil_incentive(accels(a=0.0, a_tilde=0.5), p)
        assert value == pytest.approx(0.5) and ok

    def test_indifference_fails_positive_threshold(self):
        value, ok = mobil_incentive(accels(), M)
        assert value == 0.0 and not ok

    def test_arithmetic(self):
        # gain 0.5, follower terms sum -0.2, politeness 0.5 -> 0.4 > 0.1
        a = accels(a=0.0, a_tilde=0.5, a_n=0.0, a_n_tilde_ss=-0.1, a_n_tilde=-0.1,
                   a_o=0.0, a_o_tilde=-0.1)
        value, ok = mobil_incentive(a, M)
        assert value == pytest.approx(0.4) and ok


class TestPredictedAccels:
    def test_empty_target_lane_free_flow(self):
        w = world([100.0, 120.0], [1, 1])
        out = predicted_accels(w, 0, "left", lambda v: HP)
        assert out.a_n is None and out.a_n_tilde is None
        assert out.a_tilde == pytest.approx(HP.a_max * (1 - (15 / HP.v_d) ** 4))
        assert mobil_safety(out.a_n_tilde, M)

    def test_tiny_insertion_gap_is_brutal_for_follower(self):
        # follower 2 m behind the insertion point at full speed
        w = world([100.0, 93.0, 150.0], [1, 0, 0], speeds=[15.0, 25.0, 15.0])
        out = predicted_accels(w, 0, "left", lambda v: HP)
        assert out.a_n_tilde < -8.0
        assert not mobil_safety(out.a_n_tilde, M)

    def test_identical_relocation_matches_current(self):
        # symmetric lanes: same leader distance, same follower distance; the
        # ego's realized accel is constructed to equal its IDM value
        gap = 30.0
        a_idm = float(idm_accel(15.0, gap - 5.0, 0.0, HP))
        w = world([100.0, 100.0 + gap, 100.0 + gap], [1, 1, 0],
                  accels=[a_idm, 0.0, 0.0])
        out = predicted_accels(w, 0, "left", lambda v: HP)
        assert out.a_tilde == pytest.approx(out.a)

    def test_overlap_is_infeasible(self):
        w = world([100.0, 102.0], [1, 0])
        out = predicted_accels(w, 0, "left", lambda v: HP)
        assert not out.feasible


class TestPlatoonSize:
    def make(self, classes):
        # chain ahead of ego (index 0) in lane 0 at 30 m spacing
        n = len(classes) + 1
        pos = [100.0 + 30.0 * i for i in range(n)]
        w = world(pos, [0] * n, n_lanes=1)
        conn = {i + 1: c for i, c in enumerate(classes)}
        return w, (lambda vid: conn.get(vid, False))

    def test_unconnected_immediate_leader(self):
        w, conn = self.make([False, True, True])
        assert platoon_size(w, 0, 0, conn) == 0

    def test_run_length(self):
        w, conn = self.make([True, True, True, False])
        assert platoon_size(w, 0, 0, conn) == 3

    def test_empty_lane(self):
        w = world([100.0], [0], n_lanes=1)
        assert platoon_size(w, 0, 0, lambda v: True) == 0


def side(side_name, connected=True, platoon=1, a_tilde=1.0, a_n_tilde=None,
         a_n_tilde_ss=None, a_n=None, feasible=True):
    return SideEvaluation(side_name,
                          accels(a=0.0, a_tilde=a_tilde, a_n=a_n,
                                 a_n_tilde=a_n_tilde, a_n_tilde_ss=a_n_tilde_ss,
                                 feasible=feasible),
                          connected, platoon)


class TestDecide:
    def test_connected_current_leader_stays(self):
        choice, _ = lc_decide(True, [side("left"), side("right")], M)
        assert choice == "stay"

    def test_single_valid_candidate_wins(self):
        choice, benefit = lc_decide(False, [side("left", platoon=3),
                                            side("right", connected=False)], M)
        assert choice == "left"
        assert benefit == pytest.approx(1.0 + 0.2 * 3)

    def test_equal_incentive_prefers_larger_platoon(self):
        choice, _ = lc_decide(False, [side("left", platoon=2),
                                      side("right", platoon=1)], M)
        assert choice == "left"
        choice, _ = lc_decide(False, [side("left", platoon=1),
                                      side("right", platoon=2)], M)
        assert choice == "right"

    def test_tie_breaks_left(self):
        choice, _ = lc_decide(False, [side("left"), side("right")], M)
        assert choice == "left"

    def test_unsafe_side_rejected(self):
        choice, _ = lc_decide(False, [side("left", a_n_tilde=-5.0, a_n=0.0,
                                           a_n_tilde_ss=-5.0)], M)
        assert choice == "stay"

    def test_marginal_incentive_rejected(self):
        choice, _ = lc_decide(False, [side("left", a_tilde=0.05)], M)
        assert choice == "stay"


class TestExecute:
    def test_instantaneous_relocation(self):
        w = world([100.0, 130.0, 90.0], [1, 0, 0])
        out, done = execute_lane_change(w, 0, "left")
        assert done
        assert out.lane[0] == 0
        assert out.position[0] == w.position[0]
        assert out.speed[0] == w.speed[0]
        assert w.lane[0] == 1  # input untouched

    def test_abort_on_collapsed_gap(self):
        w = world([100.0, 103.0], [1, 0])
        out, done = execute_lane_change(w, 0, "left")
        assert not done
        assert out is w

    def test_abort_when_no_lane(self):
        w = world([100.0], [0])
        out, done = execute_lane_change(w, 0, "left")
        assert not done
