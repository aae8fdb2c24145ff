"""Connectivity identification: matching radar tracks to broadcast positions.

A connected automated vehicle must figure out which of the broadcasts it
hears belongs to the vehicle its radar is tracking. Each step it compares
the broadcast-derived relative position and speed of every candidate
against the radar track; a candidate whose residuals stay inside the
chi-square match regions for n consecutive steps is confirmed connected.
If no candidate is confirmed within k windows of n steps the track is
declared unconnected, and identification retries after a cool-down.

Region thresholds are upper chi-square quantiles: alpha is the probability
that the true target falls outside its region, so the position bound is the
(1 - alpha1) quantile with 2 dof and the speed bound the (1 - alpha2)
quantile with 1 dof. Residuals are normalized by the standard deviation of
the broadcast-minus-radar error difference, sqrt(gps_sd^2 + radar_sd^2) per
position axis and the radar speed sd alone (broadcast speed error is
negligible by assumption).

Identifying the second vehicle ahead is harder: the signal path doubles the
accumulated radar uncertainty, so that slot runs with doubled radar error,
doubled streak requirement and doubled window count.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import chi2

PENDING, CONNECTED, UNCONNECTED = 0, 1, 2


@dataclass(frozen=True)
class SensorNoise:
    """Standard deviations of the measurement errors (all zero-mean normal)."""

    radar_dist_sd: float = 0.1   # m, per axis
    radar_speed_sd: float = 0.1  # m/s
    gps_dist_sd: float = 1.0     # m, per axis; broadcast speed error omitted

    def __post_init__(self) -> None:
        if min(self.radar_dist_sd, self.radar_speed_sd, self.gps_dist_sd) < 0:
            raise ValueError("noise standard deviations must be nonnegative")

    def scaled_radar(self, factor: float) -> "SensorNoise":
        """Same broadcast error, radar error scaled (second-slot sensing)."""
        return replace(self, radar_dist_sd=self.radar_dist_sd * factor,
                       radar_speed_sd=self.radar_speed_sd * factor)

    @property
    def residual_pos_sd(self) -> float:
        """Per-axis sd of broadcast-minus-radar position residuals."""
        return float(np.hypot(self.gps_dist_sd, self.radar_dist_sd))

    @property
    def residual_speed_sd(self) -> float:
        return self.radar_speed_sd


@dataclass(frozen=True)
class MatchRegions:
    """Chi-square bounds on normalized position (2 dof) and speed (1 dof)."""

    pos_threshold: float
    speed_threshold: float
    alpha1: float
    alpha2: float


def derive_thresholds(alpha1: float = 0.011, alpha2: float = 0.0049) -> MatchRegions:
    """Match regions such that the true target lies inside with prob 1 - alpha."""
    for a in (alpha1, alpha2):
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha {a} outside (0, 1)")
    return MatchRegions(
        pos_threshold=float(chi2.ppf(1.0 - alpha1, df=2)),
        speed_threshold=float(chi2.ppf(1.0 - alpha2, df=1)),
        alpha1=alpha1,
        alpha2=alpha2,
    )


def synthesize_radar(rel_xy: np.ndarray, rel_speed, noise: SensorNoise,
                     rng: np.random.Generator):
    """Noisy radar return for the tracked target: truth plus N(0, sd) per axis."""
    rel_xy = np.asarray(rel_xy, dtype=float)
    meas_xy = rel_xy + rng.standard_normal(rel_xy.shape) * noise.radar_dist_sd
    meas_v = np.asarray(rel_speed, dtype=float) + rng.standard_normal(
        np.shape(rel_speed)) * noise.radar_speed_sd
    return meas_xy, meas_v


def synthesize_gps(pos_xy: np.ndarray, noise: SensorNoise,
                   rng: np.random.Generator) -> np.ndarray:
    """Broadcast positions of connected candidates: truth plus N(0, sd) per axis."""
    pos_xy = np.asarray(pos_xy, dtype=float)
    return pos_xy + rng.standard_normal(pos_xy.shape) * noise.gps_dist_sd


def region_test(radar_rel_xy, radar_rel_speed, gps_rel_xy, gps_rel_speed,
                regions: MatchRegions, noise: SensorNoise):
    """True where a candidate's residuals fall inside both match regions.

    Broadcasts and radar measurement must refer to the same step; inputs
    broadcast elementwise (candidate axes first, trailing axis of length 2
    for xy). ``noise`` supplies the residual normalizers, i.e. the error
    model the ego assumes for its current sensing mode.
    """
    radar_rel_xy = np.asarray(radar_rel_xy, dtype=float)
    gps_rel_xy = np.asarray(gps_rel_xy, dtype=float)
    d = gps_rel_xy - radar_rel_xy
    sd_p = noise.residual_pos_sd
    sd_v = noise.residual_speed_sd
    pos_ok = (d[..., 0] / sd_p) ** 2 + (d[..., 1] / sd_p) ** 2 < regions.pos_threshold
    dv = np.asarray(gps_rel_speed, dtype=float) - np.asarray(radar_rel_speed, dtype=float)
    speed_ok = (dv / sd_v) ** 2 < regions.speed_threshold
    return pos_ok & speed_ok


@dataclass(frozen=True)
class SlotSpec:
    """Streak/window configuration of one identification slot."""

    n_inner: int          # consecutive matches required
    k_windows: int        # failed n-step windows before declaring unconnected
    radar_scale: float    # radar error multiplier for this slot

    @property
    def timeout_steps(self) -> int:
        return self.n_inner * self.k_windows

    @staticmethod
    def first(n_inner: int = 34, k_windows: int = 6) -> "SlotSpec":
        return SlotSpec(n_inner, k_windows, radar_scale=1.0)

    @staticmethod
    def second(n_inner: int = 34, k_windows: int = 6, scale: float = 2.0) -> "SlotSpec":
        """Second-preceding slot: doubled streak, windows and radar error."""
        return SlotSpec(int(round(n_inner * scale)), int(round(k_windows * scale)),
                        radar_scale=scale)


class IdentificationError(RuntimeError):
    """Raised when stepping an identification that already holds a verdict."""


class IdentificationState:
    """Streak counters and verdict for one ego/slot pair.

    Candidates index the broadcast sources the ego can hear. A candidate's
    counter grows on every in-region step and resets to zero on a miss; the
    first counter to reach n_inner resolves the verdict to connected. If
    ``timeout_steps`` elapse with no confirmation the verdict is
    unconnected. Streaks may straddle window boundaries, so the timeout is
    exactly n_inner * k_windows pending steps.
    """

    def __init__(self, spec: SlotSpec, n_candidates: int):
        self.spec = spec
        self.streak = np.zeros(n_candidates, dtype=np.int64)
        self.elapsed_steps = 0
        self.verdict = PENDING
        self.identified: int | None = None

    def elapsed(self, dt: float) -> float:
        return self.elapsed_steps * dt

    def step(self, matches: np.ndarray) -> int:
        """Advance one step with a boolean per-candidate match vector."""
        if self.verdict != PENDING:
            raise IdentificationError("identification already resolved")
        matches = np.asarray(matches, dtype=bool)
        if matches.shape != self.streak.shape:
            raise ValueError("match vector length != candidate count")
        self.streak = np.where(matches, self.streak + 1, 0)
        self.elapsed_steps += 1
        hits = np.flatnonzero(self.streak >= self.spec.n_inner)
        if len(hits):
            self.verdict = CONNECTED
            self.identified = int(hits[0])
        elif self.elapsed_steps >= self.spec.timeout_steps:
            self.verdict = UNCONNECTED
        return self.verdict


def identify_slot(slot: str, n_candidates: int, n_inner: int = 34,
                  k_windows: int = 6) -> IdentificationState:
    """Fresh identification state for the 'first' or 'second' preceding slot."""
    if slot == "first":
        spec = SlotSpec.first(n_inner, k_windows)
    elif slot == "second":
        spec = SlotSpec.second(n_inner, k_windows)
    else:
        raise ValueError("slot must be 'first' or 'second'")
    return IdentificationState(spec, n_candidates)


class IdentificationBank:
    """Vectorized identification for many (ego, slot) processes at once.

    Equivalent to one IdentificationState per row; rows whose target
    disappears or changes are reset externally. After an unconnected
    verdict a row waits ``retry_steps`` and then re-enters pending.
    """

    def __init__(self, n_rows: int, n_candidates: int, n_required: np.ndarray,
                 timeout_steps: np.ndarray, retry_steps: int):
        self.n_required = np.broadcast_to(np.asarray(n_required, dtype=np.int64),
                                          (n_rows,)).copy()
        self.timeout_steps = np.broadcast_to(np.asarray(timeout_steps, dtype=np.int64),
                                             (n_rows,)).copy()
        self.retry_steps = int(retry_steps)
        self.streak = np.zeros((n_rows, n_candidates), dtype=np.int32)
        self.elapsed = np.zeros(n_rows, dtype=np.int64)
        self.verdict = np.full(n_rows, PENDING, dtype=np.int8)
        self.identified = np.full(n_rows, -1, dtype=np.int64)
        self.retry = np.zeros(n_rows, dtype=np.int64)

    def reset_rows(self, rows) -> None:
        self.streak[rows] = 0
        self.elapsed[rows] = 0
        self.verdict[rows] = PENDING
        self.identified[rows] = -1
        self.retry[rows] = 0

    def step(self, match: np.ndarray, active: np.ndarray) -> None:
        """Advance all rows. ``match`` is (rows, candidates); inactive rows hold.

        An unconnected verdict stays in force while the row re-scans: after
        the cool-down the streak counters run again, and only a full streak
        flips the verdict to connected. A confirmed row stops scanning until
        reset (target change).
        """
        waiting = (self.verdict == UNCONNECTED) & active & (self.retry > 0)
        self.retry[waiting] -= 1
        scanning = active & (self.verdict != CONNECTED) & ~waiting
        grow = match & scanning[:, None]
        self.streak[scanning] = np.where(grow[scanning], self.streak[scanning] + 1, 0)
        self.elapsed[scanning] += 1
        hit = (self.streak >= self.n_required[:, None]) & scanning[:, None]
        hit_rows = np.flatnonzero(hit.any(axis=1))
        if len(hit_rows):
            self.verdict[hit_rows] = CONNECTED
            self.identified[hit_rows] = np.argmax(hit[hit_rows], axis=1)
        timed_out = scanning & (self.verdict != CONNECTED) & (self.elapsed >= self.timeout_steps)
        if timed_out.any():
            self.verdict[timed_out] = UNCONNECTED
            self.retry[timed_out] = self.retry_steps
            self.elapsed[timed_out] = 0
            self.streak[timed_out] = 0
