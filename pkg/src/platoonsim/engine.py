"""Deterministic fixed-step simulation of one mixed-traffic run.

Step pipeline, all sensing reads taken from the previous step's snapshot:

1. synthesize radar returns and position broadcasts with fresh seeded noise
2. advance the connectivity identification processes
3. let lane-change capable vehicles decide and execute platoon-seeking
   moves (front-to-back, losers of gap conflicts abort)
4. select a planner per automated vehicle and compute its command
5. compute human commands (delayed perception, emergency override)
6. advance vehicle motion (powertrain lag for automated vehicles, direct
   acceleration for humans, prescribed speed profiles for lane leads)
7. append log rows

Noise arrays are drawn with fixed shapes for every vehicle whether or not
the draw is consumed, so capability toggles (lane changes off, mixed
platooning off, connectivity off) never shift any random stream and the
corresponding scenarios reproduce each other bit for bit.

One prescribed lead vehicle heads each lane; followers are placed behind it
at their class's equilibrium spacing. Vehicle overlap aborts the run with a
collision flag rather than patching positions.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import control, metrics
from .core import (DEFAULT_LANE_WIDTH, DEFAULT_VEHICLE_LENGTH, FleetComposition,
                   VehicleClass, World, compose_fleet)
from .dynamics import DynamicsParams, lag_coefficient
from .human import HumanParams, idm_accel, idm_equilibrium_gap
from .identify import (CONNECTED, PENDING, UNCONNECTED, IdentificationBank,
                       MatchRegions, SensorNoise, derive_thresholds)
from .lanechange import MobilParams, ProspectiveAccels, SideEvaluation, lc_decide
from .metrics import FuelModelParams, RunMetrics
from .seeding import STREAM_GPS, STREAM_HUMAN, STREAM_RADAR, stream
from .trajectory import LeadProfile, synthesize_profile

MODE_NONE, MODE_ACC, MODE_CACC, MODE_CACCU = -1, 0, 1, 2

#: identification slots per ego: first/second ahead in lane, first ahead left/right
SLOT_FIRST, SLOT_SECOND, SLOT_LEFT, SLOT_RIGHT = 0, 1, 2, 3
N_SLOTS = 4


@dataclass(frozen=True)
class IdentifyConfig:
    n_inner: int = 34
    k_windows: int = 6
    second_slot_scale: float = 2.0
    retry_cooldown: float = 5.0   # s before re-scanning an unconnected target
    radar_range: float = 150.0    # m
    comm_range: float = 300.0     # m
    alpha1: float = 0.011
    alpha2: float = 0.0049
    # adjacent-lane verdicts persist per tracked vehicle: a resolved neighbor
    # re-acquired within this horizon resumes its verdict instead of
    # restarting the streak (radar tracks persist across leader reshuffles).
    # The own-lane slots always re-identify from scratch on a target change.
    association_memory: float = 30.0  # s


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one run; (config, seed) determines the log."""

    dt: float = 0.1
    duration: float = 1200.0
    warmup: float = 60.0
    n_followers: int = 100
    n_lanes: int = 5
    automated_class: VehicleClass = VehicleClass.CAV
    cav_fraction: float = 0.1
    chv_fraction: float = 0.1
    seed: int = 0
    vehicle_length: float = DEFAULT_VEHICLE_LENGTH
    lane_width: float = DEFAULT_LANE_WIDTH
    human: HumanParams = field(default_factory=HumanParams)
    controller: control.ControllerParams = field(default_factory=control.ControllerParams)
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    noise: SensorNoise = field(default_factory=SensorNoise)
    identify: IdentifyConfig = field(default_factory=IdentifyConfig)
    mobil: MobilParams = field(default_factory=MobilParams)
    fuel: FuelModelParams = field(default_factory=FuelModelParams)
    lead_profiles: tuple[LeadProfile, ...] | None = None
    lead_speed_mean: float = 15.0
    lead_speed_halfband: float = 5.0
    lead_phase_range: tuple[float, float] = (15.0, 45.0)
    # lane leads follow independent profiles (decorrelated waves) with
    # deterministic corrections: an alternating shear (lanes counter-move,
    # sign reversing each half period, so adjacent columns keep sliding
    # past each other within a bounded band), a slow persistent stagger
    # (left lanes faster) sweeping columns globally past one another, and,
    # beyond a free corridor, a pull toward the mean lead position capping
    # random drift
    lane_shear_amplitude: float = 0.8     # m/s, +- per lane
    lane_shear_period: float = 480.0      # s, full reversal cycle
    lane_stagger: float = 0.0             # m/s persistent offset between lanes
    lead_coupling_gain: float = 0.0       # 1/s, outside the corridor
    lead_coupling_max: float = 2.0        # m/s speed correction bound
    lead_coupling_deadband: float = 200.0  # m of free drift
    # capability toggles; disabling one reproduces the next-lower class bitwise
    lc_enabled: bool = True
    caccu_enabled: bool = True
    connectivity_enabled: bool = True

    @property
    def n_steps(self) -> int:
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("duration must be a multiple of dt")
        return int(round(steps))

    def composition(self) -> FleetComposition:
        return FleetComposition(self.n_followers, self.cav_fraction,
                                self.chv_fraction, self.automated_class)


class TrajectoryLog:
    """Per-step, per-vehicle history of one run (follower and lead columns)."""

    def __init__(self, n_steps: int, n_vehicles: int):
        shape = (n_steps + 1, n_vehicles)
        self.position = np.zeros(shape)
        self.speed = np.zeros(shape)
        self.accel = np.zeros(shape)
        self.lane = np.zeros(shape, dtype=np.int16)
        self.command = np.zeros((n_steps, n_vehicles))
        self.mode = np.full((n_steps, n_vehicles), MODE_NONE, dtype=np.int8)
        self.verdict_first = np.full((n_steps, n_vehicles), PENDING, dtype=np.int8)
        self.verdict_second = np.full((n_steps, n_vehicles), PENDING, dtype=np.int8)
        self.spacing_error = np.full((n_steps, n_vehicles), np.nan)
        self.lane_changes: list[tuple[int, int, int, int]] = []  # step, vid, from, to
        self.steps_completed = 0


@dataclass
class RunResult:
    metrics: RunMetrics
    log: TrajectoryLog
    collided: bool
    config: ScenarioConfig


def default_lead_profiles(cfg: ScenarioConfig) -> tuple[LeadProfile, ...]:
    """Synthetic per-lane lead profiles; one independent stream per lane."""
    return tuple(
        synthesize_profile(cfg.duration + cfg.dt, seed=cfg.seed,
                           speed_mean=cfg.lead_speed_mean,
                           speed_halfband=cfg.lead_speed_halfband,
                           dt=cfg.dt, source_tag=lane,
                           phase_range=cfg.lead_phase_range)
        for lane in range(cfg.n_lanes)
    )


class Simulation:
    """State of one run; step() advances it by dt."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        dt = cfg.dt
        self.n_lead = cfg.n_lanes
        self.n = cfg.n_lanes + cfg.n_followers
        profiles = cfg.lead_profiles or default_lead_profiles(cfg)
        if len(profiles) != cfg.n_lanes:
            raise ValueError("need one lead profile per lane")
        for p in profiles:
            if p.duration < cfg.duration:
                raise ValueError("lead profile shorter than scenario duration")
        self.profiles = profiles
        need = cfg.n_steps + 1
        self._lead_speeds = np.stack([
            np.concatenate([p.speeds[:need],
                            np.full(max(need - len(p.speeds), 0), p.speeds[-1])])
            for p in profiles])
        mid = (cfg.n_lanes - 1) / 2.0
        self._shear_sign = mid - np.arange(cfg.n_lanes) if cfg.n_lanes > 1 else np.zeros(1)

        fleet = compose_fleet(cfg.composition(), cfg.seed)
        n = self.n
        self.is_lead = np.zeros(n, dtype=bool)
        self.is_lead[:self.n_lead] = True
        self.connected = np.zeros(n, dtype=bool)
        self.automated = np.zeros(n, dtype=bool)
        self.caccu_cap = np.zeros(n, dtype=bool)
        self.lc_cap = np.zeros(n, dtype=bool)
        self.T_i = np.full(n, cfg.human.T)
        for j, prof in enumerate(fleet):
            v = self.n_lead + j
            # the connectivity toggle downgrades automated vehicles only;
            # connected humans keep broadcasting either way
            self.connected[v] = prof.connected and (cfg.connectivity_enabled
                                                    or not prof.automated)
            self.automated[v] = prof.automated
            self.caccu_cap[v] = prof.caccu_capable and cfg.caccu_enabled
            self.lc_cap[v] = prof.lc_capable and cfg.lc_enabled
            self.T_i[v] = prof.safe_time_headway
        # connectivity-dependent capabilities vanish with connectivity
        self.caccu_cap &= self.connected
        self.lc_cap &= self.connected
        self.human_mask = ~self.automated & ~self.is_lead

        self._place_fleet()
        self._lane_ids: list[np.ndarray] = []
        self._rebuild_lane_lists()

        # random streams: fixed-shape draws for every vehicle each step
        self.rng_radar = stream(cfg.seed, STREAM_RADAR)
        self.rng_gps = stream(cfg.seed, STREAM_GPS)
        self.rng_human = stream(cfg.seed, STREAM_HUMAN)

        self.regions: MatchRegions = derive_thresholds(cfg.identify.alpha1,
                                                       cfg.identify.alpha2)
        idc = cfg.identify
        scale = idc.second_slot_scale
        self.radar_scale = np.array([1.0, scale, 1.0, 1.0])
        self.res_pos_sd = np.hypot(cfg.noise.gps_dist_sd,
                                   cfg.noise.radar_dist_sd * self.radar_scale)
        self.res_spd_sd = np.maximum(cfg.noise.radar_speed_sd * self.radar_scale, 1e-12)
        self.res_pos_sd = np.maximum(self.res_pos_sd, 1e-12)

        self.ego_ids = np.flatnonzero(self.connected & self.automated)
        self.conn_ids = np.flatnonzero(self.connected)
        n_e = len(self.ego_ids)
        n2 = int(round(idc.n_inner * scale))
        k2 = int(round(idc.k_windows * scale))
        n_req = np.array([idc.n_inner, n2, idc.n_inner, idc.n_inner])
        timeout = np.array([idc.n_inner * idc.k_windows, n2 * k2,
                            idc.n_inner * idc.k_windows, idc.n_inner * idc.k_windows])
        self.bank = IdentificationBank(
            n_rows=n_e * N_SLOTS, n_candidates=len(self.conn_ids),
            n_required=np.tile(n_req, n_e), timeout_steps=np.tile(timeout, n_e),
            retry_steps=int(round(idc.retry_cooldown / dt)))
        self.targets = np.full((n_e, N_SLOTS), -1, dtype=np.int64)
        self._mem_ttl = int(round(idc.association_memory / dt))
        self._mem_verdict = np.full((n_e, self.n), PENDING, dtype=np.int8)
        self._mem_seen = np.full((n_e, self.n), -10 ** 9, dtype=np.int64)
        self._conn_index = np.full(self.n, -1, dtype=np.int64)
        self._conn_index[self.conn_ids] = np.arange(len(self.conn_ids))

        # controller and human per-vehicle state
        self.ff_state = np.zeros(n)
        self.prev_mode = np.full(n, MODE_NONE, dtype=np.int8)
        self.w_d = np.zeros(n)
        self.w_v = np.zeros(n)
        hd = int(round(cfg.human.delay / dt))
        self._hist_len = hd + 1
        self._hd = hd
        gaps0, dv0 = self._true_first_gaps()
        self.gap_hist = np.tile(gaps0, (self._hist_len, 1))
        self.dv_hist = np.tile(dv0, (self._hist_len, 1))
        d_steps = cfg.dynamics.delay_steps(dt)
        self._cmd_ring = np.zeros((max(d_steps, 1), n))
        self._d_steps = d_steps
        self.lc_cooldown = np.zeros(n, dtype=np.int64)
        self._lag_coef = lag_coefficient(dt, cfg.dynamics.tau_pt)
        self._ff_coef = control.filter_coefficient(dt, cfg.controller.ff_tc)
        self._idm_sqrt = 2.0 * np.sqrt(cfg.human.a_max * cfg.human.b_comf)

        self.k = 0
        self.collided = False
        self.log = TrajectoryLog(cfg.n_steps, n)
        self._write_state_log(0)
        self._human_params_cache: dict[int, HumanParams] = {}

    # ---------------------------------------------------------------- setup
    def _place_fleet(self) -> None:
        cfg = self.cfg
        n = self.n
        self.position = np.zeros(n)
        self.speed = np.zeros(n)
        self.accel = np.zeros(n)
        self.lane = np.zeros(n, dtype=np.int64)
        for lane in range(cfg.n_lanes):
            v0 = float(self.profiles[lane].speeds[0])
            self.position[lane] = 0.0
            self.speed[lane] = v0
            self.lane[lane] = lane
        depth_pos = self.position[:self.n_lead].copy()
        for j in range(cfg.n_followers):
            v = self.n_lead + j
            lane = j % cfg.n_lanes
            v0 = float(self.profiles[lane].speeds[0])
            if self.automated[v]:
                gap = cfg.controller.T_h * v0
            else:
                gap = idm_equilibrium_gap(v0, replace(cfg.human, T=float(self.T_i[v])))
            depth_pos[lane] -= cfg.vehicle_length + gap
            self.position[v] = depth_pos[lane]
            self.speed[v] = v0
            self.lane[v] = lane

    def world(self) -> World:
        return World(self.position.copy(), self.speed.copy(), self.accel.copy(),
                     self.lane.copy(), self.cfg.n_lanes, self.cfg.vehicle_length,
                     self.cfg.lane_width)

    def _rebuild_lane_lists(self) -> None:
        """Per-lane ids in front-to-back order; in-lane order only changes on
        lane changes (an in-lane crossing is a collision and aborts first)."""
        self._lane_ids = []
        for lane in range(self.cfg.n_lanes):
            ids = np.flatnonzero(self.lane == lane)
            self._lane_ids.append(ids[np.argsort(-self.position[ids], kind="stable")])
        self._rebuild_in_lane_leads()

    def _rebuild_in_lane_leads(self) -> None:
        n = self.n
        self._lead1 = np.full(n, -1, dtype=np.int64)
        self._lead2 = np.full(n, -1, dtype=np.int64)
        self._follow1 = np.full(n, -1, dtype=np.int64)
        for ids in self._lane_ids:
            self._lead1[ids[1:]] = ids[:-1]
            self._lead2[ids[2:]] = ids[:-2]
            self._follow1[ids[:-1]] = ids[1:]

    def _adjacent_leads(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(left_lead, left_follow, right_lead, right_follow) id arrays."""
        n = self.n
        ll = np.full(n, -1, dtype=np.int64)
        lf = np.full(n, -1, dtype=np.int64)
        rl = np.full(n, -1, dtype=np.int64)
        rf = np.full(n, -1, dtype=np.int64)
        asc = [ids[::-1] for ids in self._lane_ids]
        asc_pos = [self.position[ids] for ids in asc]
        for lane in range(self.cfg.n_lanes):
            mine = self._lane_ids[lane]
            if len(mine) == 0:
                continue
            p = self.position[mine]
            for adj, lead_arr, foll_arr in ((lane - 1, ll, lf), (lane + 1, rl, rf)):
                if adj < 0 or adj >= self.cfg.n_lanes or len(asc[adj]) == 0:
                    continue
                k = np.searchsorted(asc_pos[adj], p, side="right")
                has = k < len(asc[adj])
                lead_arr[mine[has]] = asc[adj][k[has]]
                kb = np.searchsorted(asc_pos[adj], p, side="left") - 1
                hasb = kb >= 0
                foll_arr[mine[hasb]] = asc[adj][kb[hasb]]
        return ll, lf, rl, rf

    def _true_first_gaps(self) -> tuple[np.ndarray, np.ndarray]:
        lead = self._lead1
        ok = lead >= 0
        safe = np.where(ok, lead, 0)
        gaps = np.where(ok, self.position[safe] - self.position - self.cfg.vehicle_length,
                        self.cfg.identify.radar_range)
        dv = np.where(ok, self.speed - self.speed[safe], 0.0)
        return gaps, dv

    def _human_params(self, vid: int) -> HumanParams:
        """IDM parameters for lane-change estimation: drivers use their own
        headway, automated vehicles their gap-policy headway."""
        p = self._human_params_cache.get(vid)
        if p is None:
            T = self.cfg.controller.T_h if self.automated[vid] else float(self.T_i[vid])
            p = replace(self.cfg.human, T=T)
            self._human_params_cache[vid] = p
        return p

    # ----------------------------------------------------------------- step
    def step(self) -> None:
        """Advance one step; raises RuntimeError after a collision."""
        if self.collided:
            raise RuntimeError("run aborted after collision")
        cfg = self.cfg
        dt = cfg.dt
        k = self.k
        n = self.n

        lead1 = self._lead1
        lead_ok = lead1 >= 0
        safe_lead = np.where(lead_ok, lead1, 0)
        gaps = np.where(lead_ok,
                        self.position[safe_lead] - self.position - cfg.vehicle_length,
                        cfg.identify.radar_range)
        if np.any((gaps <= 0.0) & lead_ok):
            self.collided = True
            return
        dvs = np.where(lead_ok, self.speed - self.speed[safe_lead], 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ttc_now = np.where(lead_ok & (dvs > 0),
                               gaps / np.where(dvs > 0, dvs, 1.0), np.inf)

        ll, lf, rl, rf = self._adjacent_leads()
        self._sync_targets(ll, rl)

        # (1) measurements from the pre-step snapshot
        radar_eta = self.rng_radar.standard_normal((n, N_SLOTS, 3))
        gps_eta = self.rng_gps.standard_normal((n, 2))
        human_eta = self.rng_human.standard_normal((n, 2))

        verdict, ident = self._identify(radar_eta, gps_eta, gaps)

        # (3) platoon-seeking lane changes
        if len(self.ego_ids) and self.lc_cap.any():
            moved = self._lane_change_phase(verdict, ident, ll, lf, rl, rf)
            if moved:
                self._rebuild_lane_lists()
                lead1 = self._lead1
                lead_ok = lead1 >= 0
                safe_lead = np.where(lead_ok, lead1, 0)
                gaps = np.where(lead_ok, self.position[safe_lead] - self.position
                                - cfg.vehicle_length, cfg.identify.radar_range)
                dvs = np.where(lead_ok, self.speed - self.speed[safe_lead], 0.0)
                ll, lf, rl, rf = self._adjacent_leads()
                self._sync_targets(ll, rl)
                verdict, ident = self._identify(None, None, gaps, advance=False)

        # (4) automated commands
        mode = np.full(n, MODE_NONE, dtype=np.int8)
        auto = self.automated
        mode[auto] = MODE_ACC
        cacc = auto & (verdict[:, SLOT_FIRST] == CONNECTED)
        caccu = (self.caccu_cap & ~cacc
                 & (verdict[:, SLOT_FIRST] == UNCONNECTED)
                 & (verdict[:, SLOT_SECOND] == CONNECTED))
        mode[cacc] = MODE_CACC
        mode[caccu] = MODE_CACCU

        radar_sd0 = cfg.noise.radar_dist_sd
        h_meas = np.where(lead_ok,
                          gaps + radar_eta[:, SLOT_FIRST, 0] * radar_sd0,
                          cfg.identify.radar_range)
        dv_meas = np.where(lead_ok,
                           -dvs + radar_eta[:, SLOT_FIRST, 2] * cfg.noise.radar_speed_sd,
                           0.0)
        e = control.spacing_error(h_meas, self.speed, cfg.controller.T_h)
        e_dot = dv_meas - cfg.controller.T_h * self.accel
        u_auto = control.acc_command(e, e_dot, cfg.controller)

        self.ff_state[mode != self.prev_mode] = 0.0
        coop = cacc | caccu
        ff_src = np.where(cacc, ident[:, SLOT_FIRST], ident[:, SLOT_SECOND])
        ff_src = np.where(coop & (ff_src >= 0), ff_src, 0)
        ff_in = self.accel[ff_src]
        self.ff_state[coop] += self._ff_coef * (ff_in[coop] - self.ff_state[coop])
        u_auto = u_auto + np.where(coop, self.ff_state, 0.0)
        # automatic emergency braking: planners hand over below the
        # time-to-collision threshold, same reflex as the human emergency mode
        u_auto = np.where(ttc_now < cfg.human.ttc_threshold, -cfg.human.b_e, u_auto)
        u_auto = np.clip(u_auto, cfg.controller.u_min, cfg.controller.u_max)
        self.prev_mode = mode

        # (5) human commands: perceive with the current error state, then advance it
        hp = cfg.human
        exact = self.connected & self.connected[safe_lead] & lead_ok
        gap_est = np.where(exact, gaps, gaps * np.exp(hp.v_s * self.w_d))
        dv_est = np.where(exact, dvs, dvs + gaps * hp.sigma_r * self.w_v)
        decay = np.exp(-dt / hp.tau_err)
        cou = np.sqrt(2.0 * dt / hp.tau_err)
        self.w_d = decay * self.w_d + cou * human_eta[:, 0]
        self.w_v = decay * self.w_v + cou * human_eta[:, 1]
        self.gap_hist[k % self._hist_len] = gap_est
        self.dv_hist[k % self._hist_len] = dv_est
        idx_old = (k - self._hd) % self._hist_len if k >= self._hd else 0
        gap_old = self.gap_hist[idx_old]
        dv_old = self.dv_hist[idx_old]
        want = hp.s0 + np.maximum(self.speed * self.T_i
                                  + self.speed * dv_old / self._idm_sqrt, 0.0)
        u_hum = hp.a_max * (1.0 - (self.speed / hp.v_d) ** 4
                            - np.square(want / np.maximum(gap_old, 1e-3)))
        u_hum = np.where(ttc_now < hp.ttc_threshold, -hp.b_e, u_hum)
        u_hum = np.where(lead_ok, u_hum,
                         hp.a_max * (1.0 - (self.speed / hp.v_d) ** 4))
        u_hum = np.clip(u_hum, cfg.controller.u_min, cfg.controller.u_max)

        command = np.where(auto, u_auto, u_hum)
        command[self.is_lead] = 0.0

        # (6) dynamics; emergency braking acts through the friction brakes,
        # which bypass the powertrain delay and lag
        if self._d_steps:
            ring_row = k % self._d_steps
            delayed = self._cmd_ring[ring_row].copy()
            self._cmd_ring[ring_row] = command
        else:
            delayed = command
        new_acc = np.where(auto, self.accel + self._lag_coef * (delayed - self.accel),
                           command)
        braking = auto & (ttc_now < cfg.human.ttc_threshold)
        new_acc = np.where(braking, command, new_acc)
        new_spd = np.maximum(0.0, self.speed + new_acc * dt)
        lead_pos = self.position[:self.n_lead]
        gap_to_mid = lead_pos.mean() - lead_pos
        excess = np.sign(gap_to_mid) * np.maximum(
            np.abs(gap_to_mid) - cfg.lead_coupling_deadband, 0.0)
        pull = np.clip(cfg.lead_coupling_gain * excess,
                       -cfg.lead_coupling_max, cfg.lead_coupling_max)
        shear = (self._shear_sign * cfg.lane_shear_amplitude
                 * np.clip(3.0 * np.sin(2.0 * np.pi * (k + 1) * dt
                                        / cfg.lane_shear_period), -1.0, 1.0))
        stagger = self._shear_sign * cfg.lane_stagger
        v_next = np.maximum(self._lead_speeds[:, k + 1] + shear + stagger + pull, 0.0)
        new_acc[:self.n_lead] = (v_next - self.speed[:self.n_lead]) / dt
        new_spd[:self.n_lead] = v_next
        self.accel = new_acc
        self.speed = new_spd
        self.position = self.position + new_spd * dt
        np.maximum(self.lc_cooldown - 1, 0, out=self.lc_cooldown)

        # (7) log
        log = self.log
        log.command[k] = command
        log.mode[k] = mode
        log.verdict_first[k] = verdict[:, SLOT_FIRST]
        log.verdict_second[k] = verdict[:, SLOT_SECOND]
        err = control.spacing_error(gaps, log.speed[k], cfg.controller.T_h)
        log.spacing_error[k] = np.where(auto & lead_ok, err, np.nan)
        self.k = k + 1
        self._write_state_log(self.k)
        log.steps_completed = self.k

    # ------------------------------------------------------------- internals
    def _identify(self, radar_eta, gps_eta, gaps, advance: bool = True):
        """Advance the identification bank; returns full-width verdict/ident.

        With advance=False only rescatters the bank state (after lane
        changes reset rows mid-step). ident holds vehicle ids, -1 if none.
        """
        cfg = self.cfg
        n = self.n
        egos = self.ego_ids
        n_e = len(egos)
        verdict = np.full((n, N_SLOTS), PENDING, dtype=np.int8)
        ident = np.full((n, N_SLOTS), -1, dtype=np.int64)
        if n_e == 0:
            return verdict, ident
        if advance:
            tgt = self.targets
            has_tgt = tgt >= 0
            safe_tgt = np.where(has_tgt, tgt, 0)
            pos_e = self.position[egos][:, None]
            lane_e = self.lane[egos][:, None]
            spd_e = self.speed[egos][:, None]
            rel_x = np.where(has_tgt, self.position[safe_tgt] - pos_e, 0.0)
            rel_y = np.where(has_tgt, (self.lane[safe_tgt] - lane_e) * cfg.lane_width, 0.0)
            rel_v = np.where(has_tgt, self.speed[safe_tgt] - spd_e, 0.0)
            eta = radar_eta[egos]
            radar_x = rel_x + eta[:, :, 0] * (cfg.noise.radar_dist_sd * self.radar_scale)
            radar_y = rel_y + eta[:, :, 1] * (cfg.noise.radar_dist_sd * self.radar_scale)
            radar_v = rel_v + eta[:, :, 2] * (cfg.noise.radar_speed_sd * self.radar_scale)

            conn = self.conn_ids
            gps_x = self.position[conn] + gps_eta[conn, 0] * cfg.noise.gps_dist_sd
            gps_y = (self.lane[conn] * cfg.lane_width
                     + gps_eta[conn, 1] * cfg.noise.gps_dist_sd)
            g_rel_x = gps_x[None, :] - pos_e
            g_rel_y = gps_y[None, :] - lane_e * cfg.lane_width
            g_rel_v = self.speed[conn][None, :] - spd_e
            cand = ((np.abs(self.position[conn][None, :] - pos_e)
                     <= cfg.identify.comm_range)
                    & (conn[None, :] != egos[:, None]))
            dx = g_rel_x[:, None, :] - radar_x[:, :, None]
            dy = g_rel_y[:, None, :] - radar_y[:, :, None]
            dvv = g_rel_v[:, None, :] - radar_v[:, :, None]
            sp = self.res_pos_sd[None, :, None]
            sv = self.res_spd_sd[None, :, None]
            match = ((np.square(dx / sp) + np.square(dy / sp) < self.regions.pos_threshold)
                     & (np.square(dvv / sv) < self.regions.speed_threshold)
                     & cand[:, None, :])
            self.bank.step(match.reshape(n_e * N_SLOTS, len(conn)),
                           has_tgt.reshape(n_e * N_SLOTS))
            self._memorize_verdicts()
        bank_v = self.bank.verdict.reshape(n_e, N_SLOTS)
        bank_i = self.bank.identified.reshape(n_e, N_SLOTS)
        verdict[egos] = bank_v
        resolved = bank_i >= 0
        ident[egos] = np.where(resolved, self.conn_ids[np.where(resolved, bank_i, 0)], -1)
        return verdict, ident

    def _write_state_log(self, row: int) -> None:
        self.log.position[row] = self.position
        self.log.speed[row] = self.speed
        self.log.accel[row] = self.accel
        self.log.lane[row] = self.lane

    def _sync_targets(self, left_lead: np.ndarray, right_lead: np.ndarray) -> None:
        """Refresh slot targets; reset identification rows whose target changed.

        Side-slot rows whose new target carries a fresh remembered verdict
        resume it immediately (persistent radar-track association); own-lane
        slots always restart identification.
        """
        if len(self.ego_ids) == 0:
            return
        egos = self.ego_ids
        new_tgt = np.stack([self._lead1[egos], self._lead2[egos],
                            left_lead[egos], right_lead[egos]], axis=1)
        ok = new_tgt >= 0
        safe = np.where(ok, new_tgt, 0)
        dist = np.where(ok, self.position[safe] - self.position[egos][:, None], np.inf)
        new_tgt = np.where(ok & (dist <= self.cfg.identify.radar_range), new_tgt, -1)
        changed = new_tgt != self.targets
        if changed.any():
            self.bank.reset_rows(np.flatnonzero(changed.reshape(-1)))
            self._resume_side_rows(new_tgt, changed)
        self.targets = new_tgt

    def _resume_side_rows(self, new_tgt: np.ndarray, changed: np.ndarray) -> None:
        rows_e, slots = np.nonzero(changed[:, (SLOT_LEFT, SLOT_RIGHT)])
        if len(rows_e) == 0:
            return
        slots = slots + SLOT_LEFT
        tgt = new_tgt[rows_e, slots]
        valid = tgt >= 0
        rows_e, slots, tgt = rows_e[valid], slots[valid], tgt[valid]
        mem_v = self._mem_verdict[rows_e, tgt]
        fresh = (self.k - self._mem_seen[rows_e, tgt]) <= self._mem_ttl
        resume = fresh & (mem_v != PENDING)
        if not resume.any():
            return
        rows = rows_e[resume] * N_SLOTS + slots[resume]
        verdicts = mem_v[resume]
        self.bank.verdict[rows] = verdicts
        conn_idx = self._conn_index[tgt[resume]]
        connected_resume = verdicts == CONNECTED
        self.bank.identified[rows] = np.where(connected_resume, conn_idx, -1)
        self.bank.retry[rows] = np.where(connected_resume, 0, self.bank.retry_steps)

    def _memorize_verdicts(self) -> None:
        """Record resolved verdicts per (ego, tracked vehicle) for later resume."""
        n_e = len(self.ego_ids)
        if n_e == 0:
            return
        bank_v = self.bank.verdict.reshape(n_e, N_SLOTS)
        resolved = (bank_v != PENDING) & (self.targets >= 0)
        rows_e, slots = np.nonzero(resolved)
        if len(rows_e) == 0:
            return
        tgt = self.targets[rows_e, slots]
        self._mem_verdict[rows_e, tgt] = bank_v[rows_e, slots]
        self._mem_seen[rows_e, tgt] = self.k

    def _idm_toward(self, vid: int, leader: int, steady: bool = False) -> float:
        """IDM acceleration of vid toward a leader id; free flow when < 0."""
        p = self._human_params(vid)
        v = float(self.speed[vid])
        if leader < 0:
            return float(p.a_max * (1.0 - (v / p.v_d) ** 4))
        h = float(self.position[leader] - self.position[vid] - self.cfg.vehicle_length)
        if h <= 0:
            return -np.inf
        dv = 0.0 if steady else v - float(self.speed[leader])
        return float(idm_accel(v, h, dv, p))

    def _lane_change_phase(self, verdict, ident, ll, lf, rl, rf) -> bool:
        """Decide from the snapshot, execute front-to-back; True if any moved."""
        cfg = self.cfg
        deciders = (self.lc_cap & (self.lc_cooldown == 0)
                    & (verdict[:, SLOT_FIRST] != CONNECTED)
                    & ((verdict[:, SLOT_LEFT] == CONNECTED)
                       | (verdict[:, SLOT_RIGHT] == CONNECTED)))
        ids = np.flatnonzero(deciders)
        if len(ids) == 0:
            return False
        decisions: list[tuple[float, int, str]] = []
        for ego in ids:
            ego = int(ego)
            sides = []
            for side, slot, lead_arr, foll_arr in (
                    ("left", SLOT_LEFT, ll, lf), ("right", SLOT_RIGHT, rl, rf)):
                lead_id = int(lead_arr[ego])
                if lead_id < 0 or verdict[ego, slot] != CONNECTED \
                        or int(ident[ego, slot]) != lead_id:
                    continue
                accels = self._prospective_accels(ego, lead_id, int(foll_arr[ego]))
                size = self._platoon_size_from(ego, lead_id)
                sides.append(SideEvaluation(side, accels, True, size))
            if not sides:
                continue
            choice, _ = lc_decide(False, sides, cfg.mobil)
            if choice != "stay":
                decisions.append((-float(self.position[ego]), ego, choice))
        if not decisions:
            return False
        decisions.sort()  # front-most first
        moved = False
        for _, ego, side in decisions:
            target = int(self.lane[ego]) + (-1 if side == "left" else 1)
            if target < 0 or target >= cfg.n_lanes:
                continue
            tgt_ids = self._lane_ids[target]
            pos = self.position[ego]
            ahead = tgt_ids[self.position[tgt_ids] > pos]
            behind = tgt_ids[self.position[tgt_ids] < pos]
            new_lead = int(ahead[-1]) if len(ahead) else -1
            new_foll = int(behind[0]) if len(behind) else -1
            L = cfg.vehicle_length
            if new_lead >= 0 and self.position[new_lead] - pos - L <= 0:
                continue
            if new_foll >= 0 and pos - self.position[new_foll] - L <= 0:
                continue
            old = int(self.lane[ego])
            self.lane[ego] = target
            self._move_in_lane_lists(ego, old, target)
            self.lc_cooldown[ego] = int(round(cfg.mobil.cooldown / cfg.dt))
            self.log.lane_changes.append((self.k, ego, old, target))
            moved = True
        return moved

    def _move_in_lane_lists(self, ego: int, old: int, new: int) -> None:
        ids = self._lane_ids[old]
        self._lane_ids[old] = ids[ids != ego]
        tgt = self._lane_ids[new]
        k = int(np.searchsorted(-self.position[tgt], -self.position[ego]))
        self._lane_ids[new] = np.insert(tgt, k, ego)

    def _prospective_accels(self, ego: int, new_lead: int, new_foll: int) -> ProspectiveAccels:
        cur_lead = int(self._lead1[ego])
        old_foll = int(self._follow1[ego])
        a = float(self.accel[ego])
        a_tilde = self._idm_toward(ego, new_lead, steady=True)
        feasible = np.isfinite(a_tilde)
        a_n = a_n_tilde = a_n_tilde_ss = None
        if new_foll >= 0:
            a_n = float(self.accel[new_foll])
            a_n_tilde = self._idm_toward(new_foll, ego)
            a_n_tilde_ss = self._idm_toward(new_foll, ego, steady=True)
            if not np.isfinite(a_n_tilde):
                feasible = False
        a_o = a_o_tilde = None
        if old_foll >= 0:
            a_o = float(self.accel[old_foll])
            a_o_tilde = self._idm_toward(old_foll, cur_lead, steady=True)
        return ProspectiveAccels(a=a, a_tilde=a_tilde if feasible else -np.inf,
                                 a_n=a_n, a_n_tilde=a_n_tilde, a_n_tilde_ss=a_n_tilde_ss,
                                 a_o=a_o, a_o_tilde=a_o_tilde, feasible=bool(feasible))

    def _platoon_size_from(self, ego: int, first_leader: int) -> int:
        """Connected run ahead: confirmed verdict for the first vehicle,
        broadcast presence for the chain beyond it."""
        size = 0
        vid = first_leader
        first = True
        while vid >= 0:
            if first:
                ok = True  # caller verified the confirmed verdict
                first = False
            else:
                ok = bool(self.connected[vid])
            if not ok:
                break
            size += 1
            vid = int(self._lead1[vid])
        return size

    # ------------------------------------------------------------------ run
    def run(self) -> RunResult:
        for _ in range(self.cfg.n_steps):
            self.step()
            if self.collided:
                break
        return RunResult(metrics=self.compute_metrics(), log=self.log,
                         collided=self.collided, config=self.cfg)

    def compute_metrics(self) -> RunMetrics:
        cfg = self.cfg
        done = self.log.steps_completed
        first = int(round(cfg.warmup / cfg.dt))
        follower = ~self.is_lead
        if done <= first:
            empty = metrics.ScopeMetrics(np.nan, np.nan, 0.0, np.nan, np.nan)
            return RunMetrics(0.0, 0.0, 0.0, empty, empty,
                              n_lane_changes=len(self.log.lane_changes),
                              collided=self.collided)
        sl = slice(first, done)
        state_sl = slice(first + 1, done + 1)
        return metrics.compute_run_metrics(
            mode_trace=self.log.mode[sl][:, follower],
            spacing_err=self.log.spacing_error[sl][:, follower],
            speed=self.log.speed[state_sl][:, follower],
            accel=self.log.accel[state_sl][:, follower],
            automated_mask=self.automated[follower],
            dt=cfg.dt,
            fuel=cfg.fuel,
            cacc_code=MODE_CACC,
            caccu_code=MODE_CACCU,
            n_lane_changes=len(self.log.lane_changes),
            collided=self.collided,
        )


def init_run(cfg: ScenarioConfig) -> Simulation:
    return Simulation(cfg)


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    return Simulation(cfg).run()
