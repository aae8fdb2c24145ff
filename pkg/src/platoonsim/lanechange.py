"""Platoon-seeking lane changes: MOBIL safety/incentive plus connectivity.

A lane change is only ever considered when the current first leader is not
confirmed connected and the candidate lane's first leader is. Among
candidate sides passing the MOBIL safety bound (new follower deceleration)
and incentive test, the side with the larger benefit wins; the benefit adds
a per-member bonus for the confirmed platoon ahead in the target lane, so
larger platoons attract. Ties break to the left.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import World
from .human import HumanParams, idm_accel


@dataclass(frozen=True)
class MobilParams:
    b_safe: float = -4.0        # maximum acceptable new-follower deceleration, m/s^2
    politeness: float = 0.5
    delta_a_th: float = 0.1     # incentive threshold, m/s^2
    cooldown: float = 10.0      # s between lane changes per vehicle
    platoon_weight: float = 0.2  # benefit per platoon member, m/s^2

    def __post_init__(self) -> None:
        if self.b_safe >= 0:
            raise ValueError("b_safe is a deceleration bound and must be negative")
        if self.politeness < 0 or self.delta_a_th < 0 or self.platoon_weight < 0:
            raise ValueError("politeness, threshold and weight must be nonnegative")


@dataclass(frozen=True)
class ProspectiveAccels:
    """Accelerations around a hypothetical instantaneous relocation of the ego.

    Current accelerations (a, a_n, a_o) are the realized ones from the
    snapshot. The safety check uses the new follower's transient IDM
    response (a_n_tilde, closing speed included): a follower already
    closing on the insertion point vetoes the move. The incentive compares
    steady-state IDM accelerations (the _ss fields, evaluated at zero
    closing speed), because a platoon-seeking change trades a transient
    disturbance for the lasting configuration. None marks an absent
    vehicle; feasible is False when the relocation would overlap one.
    """

    a: float
    a_tilde: float            # ego toward new leader, steady state
    a_n: float | None
    a_n_tilde: float | None   # new follower toward ego, transient (safety)
    a_n_tilde_ss: float | None
    a_o: float | None
    a_o_tilde: float | None   # old follower toward old leader, steady state
    feasible: bool = True


def _idm(world: World, vid: int, leader: int | None, params: HumanParams,
         steady: bool = False) -> float:
    """IDM acceleration of vid toward leader; free flow when leader is None.

    steady=True evaluates at zero closing speed (lasting-configuration
    estimate); otherwise the snapshot closing speed applies.
    """
    v = float(world.speed[vid])
    if leader is None:
        return float(params.a_max * (1.0 - (v / params.v_d) ** 4))
    g = world.gap_to(vid, leader)
    if g.h <= 0:
        return -np.inf
    return float(idm_accel(v, g.h, 0.0 if steady else g.dv, params))


def predicted_accels(world: World, ego: int, side: str,
                     idm_params_of: Callable[[int], HumanParams]) -> ProspectiveAccels:
    """MOBIL accelerations for an instantaneous relocation of ego.

    Post-change accelerations come from each vehicle's IDM parameters
    (idm_params_of) on the current-snapshot gaps; pre-change accelerations
    are read from the snapshot. A non-positive prospective gap marks the
    move infeasible.
    """
    cur_lead = world.first_preceding(ego)
    new_lead, new_foll = world.adjacent_lane_neighbors(ego, side)
    old_foll = _follower_in_lane(world, ego)

    a = float(world.accel[ego])
    a_tilde = _idm(world, ego, new_lead, idm_params_of(ego), steady=True)
    feasible = np.isfinite(a_tilde)

    a_n = a_n_tilde = a_n_tilde_ss = None
    if new_foll is not None:
        a_n = float(world.accel[new_foll])
        p_f = idm_params_of(new_foll)
        a_n_tilde = _idm(world, new_foll, ego, p_f)
        a_n_tilde_ss = _idm(world, new_foll, ego, p_f, steady=True)
        if not np.isfinite(a_n_tilde):
            feasible = False

    a_o = a_o_tilde = None
    if old_foll is not None:
        a_o = float(world.accel[old_foll])
        a_o_tilde = _idm(world, old_foll, cur_lead, idm_params_of(old_foll), steady=True)

    return ProspectiveAccels(a=a, a_tilde=float(a_tilde) if feasible else -np.inf,
                             a_n=a_n, a_n_tilde=a_n_tilde, a_n_tilde_ss=a_n_tilde_ss,
                             a_o=a_o, a_o_tilde=a_o_tilde, feasible=bool(feasible))


def _follower_in_lane(world: World, vid: int) -> int | None:
    lane = int(world.lane[vid])
    pos = world.position[vid]
    ids = np.flatnonzero(world.lane == lane)
    behind = ids[world.position[ids] < pos]
    return int(behind[np.argmax(world.position[behind])]) if len(behind) else None


def mobil_safety(a_n_tilde: float | None, params: MobilParams) -> bool:
    """New follower must not brake harder than b_safe; no follower is safe."""
    if a_n_tilde is None:
        return True
    return a_n_tilde > params.b_safe


def mobil_incentive(accels: ProspectiveAccels, params: MobilParams) -> tuple[float, bool]:
    """Incentive value and whether it clears the threshold.

    value = (a_tilde - a) + politeness * (a_n_tilde - a_n + a_o_tilde - a_o)
    on the steady-state post-change estimates, with absent-follower terms
    contributing zero.
    """
    value = accels.a_tilde - accels.a
    if accels.a_n is not None and accels.a_n_tilde_ss is not None:
        value += params.politeness * (accels.a_n_tilde_ss - accels.a_n)
    if accels.a_o is not None and accels.a_o_tilde is not None:
        value += params.politeness * (accels.a_o_tilde - accels.a_o)
    return float(value), bool(value > params.delta_a_th)


def platoon_size(world: World, ego: int, lane: int,
                 connected_of: Callable[[int], bool]) -> int:
    """Length of the unbroken connected run directly ahead of ego in a lane.

    Scans front-ward from ego's position and stops at the first vehicle that
    connected_of reports unconnected (pending verdicts count as
    unconnected).
    """
    ids = np.flatnonzero(world.lane == lane)
    ahead = ids[world.position[ids] > world.position[ego]]
    order = ahead[np.argsort(world.position[ahead])]
    size = 0
    for vid in order:
        if not connected_of(int(vid)):
            break
        size += 1
    return size


@dataclass(frozen=True)
class SideEvaluation:
    side: str
    accels: ProspectiveAccels
    connected_leader: bool
    platoon: int


def lc_decide(current_leader_connected: bool, sides: list[SideEvaluation],
              params: MobilParams) -> tuple[str, float | None]:
    """Pick 'stay', 'left' or 'right' from evaluated candidates.

    Candidates are considered only when the current first leader is not
    confirmed connected and the candidate side's first leader is. A
    candidate's benefit, defined only when both the safety bound and the
    incentive test pass, is the incentive value plus platoon_weight per
    confirmed platoon member ahead. The best benefit wins; ties go left.
    """
    if current_leader_connected:
        return "stay", None
    best: tuple[float, int, str] | None = None
    for rank, ev in enumerate(sides):
        if not ev.connected_leader or not ev.accels.feasible:
            continue
        if not mobil_safety(ev.accels.a_n_tilde, params):
            continue
        value, passes = mobil_incentive(ev.accels, params)
        if not passes:
            continue
        benefit = value + params.platoon_weight * ev.platoon
        # rank keeps left-first tie-breaking when benefits are equal
        if best is None or benefit > best[0] + 1e-12:
            best = (benefit, rank, ev.side)
    if best is None:
        return "stay", None
    return best[2], best[0]


def execute_lane_change(world: World, ego: int, side: str) -> tuple[World, bool]:
    """Instantaneous relocation at the step boundary; aborts on collapsed gaps.

    Returns the (possibly new) world and whether the change executed. The
    input world is never mutated; an aborted change returns it unchanged.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    new_lead, new_foll = world.adjacent_lane_neighbors(ego, side)
    target_lane = int(world.lane[ego]) + (-1 if side == "left" else 1)
    if target_lane < 0 or target_lane >= world.n_lanes:
        return world, False
    if new_lead is not None and world.gap_to(ego, new_lead).h <= 0:
        return world, False
    if new_foll is not None and world.gap_to(new_foll, ego).h <= 0:
        return world, False
    lane = world.lane.copy()
    lane[ego] = target_lane
    out = World(world.position.copy(), world.speed.copy(), world.accel.copy(),
                lane, world.n_lanes, world.vehicle_length, world.lane_width)
    return out, True
