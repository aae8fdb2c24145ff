"""Domain types, fleet composition and neighbor queries on a multi-lane segment.

Vehicle positions are front-bumper coordinates along a straight segment.
The bumper gap between a vehicle and its leader is
``pos_leader - pos_ego - vehicle_length``; gaps must stay strictly positive
(a non-positive gap is a collision and aborts the run).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .seeding import STREAM_FLEET, stream

DEFAULT_VEHICLE_LENGTH = 5.0  # m, uniform fleet
DEFAULT_LANE_WIDTH = 3.5      # m, lateral offset per lane index


class VehicleClass(enum.Enum):
    """Behavioral class of a vehicle (capability bundle)."""

    THV = "thv"          # traditional human-driven, unconnected
    CHV = "chv"          # connected human-driven
    AV = "av"            # automated, radar only
    CAV = "cav"          # automated + connected
    CAVU = "cavu"        # CAV + mixed platooning behind unconnected leaders
    CAVU_LC = "cavu_lc"  # CAVU + platoon-seeking lane changes

    @property
    def connected(self) -> bool:
        return self in (VehicleClass.CHV, VehicleClass.CAV,
                        VehicleClass.CAVU, VehicleClass.CAVU_LC)

    @property
    def automated(self) -> bool:
        return self in (VehicleClass.AV, VehicleClass.CAV,
                        VehicleClass.CAVU, VehicleClass.CAVU_LC)

    @property
    def caccu_capable(self) -> bool:
        return self in (VehicleClass.CAVU, VehicleClass.CAVU_LC)

    @property
    def lc_capable(self) -> bool:
        return self is VehicleClass.CAVU_LC


#: automated functionality variants selectable in a scenario
AUTOMATED_CLASSES = (VehicleClass.AV, VehicleClass.CAV,
                     VehicleClass.CAVU, VehicleClass.CAVU_LC)


@dataclass(frozen=True)
class VehicleState:
    """Kinematic state of one vehicle at one step."""

    position: float   # m along segment, front bumper
    speed: float      # m/s, >= 0
    accel: float      # m/s^2 realized
    lane: int         # 0-based lane index


@dataclass(frozen=True)
class VehicleProfile:
    """Identity and capability flags of one vehicle."""

    id: int
    vclass: VehicleClass
    safe_time_headway: float = 1.5  # per-driver IDM T, used by human classes

    @property
    def connected(self) -> bool:
        return self.vclass.connected

    @property
    def automated(self) -> bool:
        return self.vclass.automated

    @property
    def caccu_capable(self) -> bool:
        return self.vclass.caccu_capable

    @property
    def lc_capable(self) -> bool:
        return self.vclass.lc_capable


@dataclass(frozen=True)
class Gap:
    """Bumper gap and closing speed toward the preceding vehicle."""

    h: float    # m, > 0 for valid pairs
    dv: float   # m/s, ego speed minus leader speed


@dataclass(frozen=True)
class FleetComposition:
    """Fleet mix by market penetration rate.

    Fractions are of the follower fleet; the automated fraction and the
    connected-human fraction are equal in the experiment design (CV share
    split evenly), but the type accepts any valid pair.
    """

    n_vehicles: int
    cav_fraction: float
    chv_fraction: float
    automated_class: VehicleClass = VehicleClass.CAV

    def __post_init__(self) -> None:
        if not (0.0 <= self.cav_fraction <= 1.0 and 0.0 <= self.chv_fraction <= 1.0):
            raise ValueError("fractions must lie in [0, 1]")
        if self.cav_fraction + self.chv_fraction > 1.0 + 1e-12:
            raise ValueError(
                f"fraction sum {self.cav_fraction + self.chv_fraction} exceeds 1")
        if self.automated_class not in AUTOMATED_CLASSES:
            raise ValueError(f"{self.automated_class} is not an automated class")

    @property
    def counts(self) -> tuple[int, int, int]:
        """(automated, chv, thv) counts: floor per connected class, remainder THV."""
        n_auto = int(np.floor(self.cav_fraction * self.n_vehicles + 1e-9))
        n_chv = int(np.floor(self.chv_fraction * self.n_vehicles + 1e-9))
        return n_auto, n_chv, self.n_vehicles - n_auto - n_chv


def compose_fleet(composition: FleetComposition, seed: int) -> list[VehicleProfile]:
    """Assign vehicle classes to follower slots with a seeded uniform shuffle.

    The same seed always yields the same assignment. Per-driver safe time
    headways are drawn once for every slot (uniform [1, 2]) so that swapping
    the automated class between scenarios never shifts the draw sequence;
    only human classes consume theirs.
    """
    rng = stream(seed, STREAM_FLEET)
    n_auto, n_chv, n_thv = composition.counts
    classes = ([composition.automated_class] * n_auto
               + [VehicleClass.CHV] * n_chv
               + [VehicleClass.THV] * n_thv)
    order = rng.permutation(composition.n_vehicles)
    headways = rng.uniform(1.0, 2.0, size=composition.n_vehicles)
    assigned: list[VehicleClass] = [VehicleClass.THV] * composition.n_vehicles
    for slot, cls in zip(order, classes):
        assigned[slot] = cls
    return [VehicleProfile(id=i, vclass=assigned[i], safe_time_headway=float(headways[i]))
            for i in range(composition.n_vehicles)]


class World:
    """Positions, speeds and lane occupancy of all vehicles at one step.

    Structure-of-arrays snapshot. The per-lane front-to-back order is
    recomputed from positions on demand; two vehicles in one lane must never
    share a position.
    """

    def __init__(self, position: np.ndarray, speed: np.ndarray, accel: np.ndarray,
                 lane: np.ndarray, n_lanes: int,
                 vehicle_length: float = DEFAULT_VEHICLE_LENGTH,
                 lane_width: float = DEFAULT_LANE_WIDTH):
        self.position = np.asarray(position, dtype=float)
        self.speed = np.asarray(speed, dtype=float)
        self.accel = np.asarray(accel, dtype=float)
        self.lane = np.asarray(lane, dtype=np.int64)
        self.n_lanes = int(n_lanes)
        self.vehicle_length = float(vehicle_length)
        self.lane_width = float(lane_width)
        if not (len(self.position) == len(self.speed) == len(self.accel) == len(self.lane)):
            raise ValueError("state arrays must share one length")
        if np.any((self.lane < 0) | (self.lane >= self.n_lanes)):
            raise ValueError("lane index out of range")

    @property
    def n(self) -> int:
        return len(self.position)

    def state_of(self, vehicle_id: int) -> VehicleState:
        self._check(vehicle_id)
        return VehicleState(float(self.position[vehicle_id]),
                            float(self.speed[vehicle_id]),
                            float(self.accel[vehicle_id]),
                            int(self.lane[vehicle_id]))

    def _check(self, vehicle_id: int) -> None:
        if not (0 <= vehicle_id < self.n):
            raise KeyError(f"unknown vehicle id {vehicle_id}")

    def lane_order(self, lane: int) -> np.ndarray:
        """Vehicle ids in the lane, front (largest position) first."""
        ids = np.flatnonzero(self.lane == lane)
        return ids[np.argsort(-self.position[ids], kind="stable")]

    def first_preceding(self, vehicle_id: int) -> int | None:
        """Nearest vehicle strictly ahead in the same lane, or None."""
        self._check(vehicle_id)
        return self._ahead_in_lane(vehicle_id, int(self.lane[vehicle_id]), 1)

    def second_preceding(self, vehicle_id: int) -> int | None:
        """Second-nearest vehicle strictly ahead in the same lane, or None."""
        self._check(vehicle_id)
        return self._ahead_in_lane(vehicle_id, int(self.lane[vehicle_id]), 2)

    def _ahead_in_lane(self, vehicle_id: int, lane: int, rank: int) -> int | None:
        pos = self.position[vehicle_id]
        ids = np.flatnonzero(self.lane == lane)
        ahead = ids[self.position[ids] > pos]
        if len(ahead) < rank:
            return None
        order = ahead[np.argsort(self.position[ahead])]
        return int(order[rank - 1])

    def adjacent_lane_neighbors(self, vehicle_id: int, side: str) -> tuple[int | None, int | None]:
        """(new_leader, new_follower) in the adjacent lane, either may be None.

        side 'left' is lane-1, 'right' is lane+1; a nonexistent lane yields
        (None, None).
        """
        self._check(vehicle_id)
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        lane = int(self.lane[vehicle_id]) + (-1 if side == "left" else 1)
        if lane < 0 or lane >= self.n_lanes:
            return None, None
        pos = self.position[vehicle_id]
        ids = np.flatnonzero(self.lane == lane)
        ahead = ids[self.position[ids] > pos]
        behind = ids[self.position[ids] < pos]
        leader = int(ahead[np.argmin(self.position[ahead])]) if len(ahead) else None
        follower = int(behind[np.argmax(self.position[behind])]) if len(behind) else None
        return leader, follower

    def gap_to(self, vehicle_id: int, leader_id: int) -> Gap:
        """Bumper gap and closing speed from vehicle to a leader."""
        h = float(self.position[leader_id] - self.position[vehicle_id] - self.vehicle_length)
        dv = float(self.speed[vehicle_id] - self.speed[leader_id])
        return Gap(h=h, dv=dv)

    def assert_no_overlap(self) -> None:
        """Raise if any two vehicles in one lane overlap (gap <= 0)."""
        for lane in range(self.n_lanes):
            order = self.lane_order(lane)
            if len(order) < 2:
                continue
            gaps = (self.position[order[:-1]] - self.position[order[1:]]
                    - self.vehicle_length)
            if np.any(gaps <= 0.0):
                raise CollisionError(f"overlap in lane {lane}")


class CollisionError(RuntimeError):
    """Two vehicles in one lane overlapped; the run is invalid from here on."""


@dataclass
class NeighborTable:
    """Per-vehicle neighbor indices for one step, -1 where absent.

    lead1/lead2: first and second vehicle ahead in the own lane.
    left_lead/right_lead: nearest vehicle ahead in the adjacent lane.
    left_follow/right_follow: nearest vehicle behind in the adjacent lane.
    """

    lead1: np.ndarray
    lead2: np.ndarray
    left_lead: np.ndarray
    left_follow: np.ndarray
    right_lead: np.ndarray
    right_follow: np.ndarray

    @staticmethod
    def build(world: World) -> "NeighborTable":
        n = world.n
        lead1 = np.full(n, -1, dtype=np.int64)
        lead2 = np.full(n, -1, dtype=np.int64)
        ll = np.full(n, -1, dtype=np.int64)
        lf = np.full(n, -1, dtype=np.int64)
        rl = np.full(n, -1, dtype=np.int64)
        rf = np.full(n, -1, dtype=np.int64)
        orders = [world.lane_order(lane) for lane in range(world.n_lanes)]
        for order in orders:
            if len(order) == 0:
                continue
            lead1[order[1:]] = order[:-1]
            lead2[order[2:]] = order[:-2]
        # adjacent lanes by binary search on ascending positions
        asc = [o[::-1] for o in orders]           # back-to-front = ascending pos
        asc_pos = [world.position[o] for o in asc]
        for lane in range(world.n_lanes):
            mine = orders[lane]
            if len(mine) == 0:
                continue
            for side, lead_arr, foll_arr in (("left", ll, lf), ("right", rl, rf)):
                adj = lane - 1 if side == "left" else lane + 1
                if adj < 0 or adj >= world.n_lanes or len(asc[adj]) == 0:
                    continue
                p = world.position[mine]
                k = np.searchsorted(asc_pos[adj], p, side="right")
                has_lead = k < len(asc[adj])
                lead_arr[mine[has_lead]] = asc[adj][k[has_lead]]
                kb = np.searchsorted(asc_pos[adj], p, side="left") - 1
                has_foll = kb >= 0
                foll_arr[mine[has_foll]] = asc[adj][kb[has_foll]]
        return NeighborTable(lead1, lead2, ll, lf, rl, rf)
