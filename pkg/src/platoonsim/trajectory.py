"""Lead-vehicle speed profiles: real trajectory ingestion and extension,
plus a seeded synthetic generator.

The packaged CSV schema is ``vehicle_id,frame,lane,local_y_m,speed_mps``
(UTF-8, LF, decimal point, 10 Hz frames). Raw US-101-style exports with
Vehicle_ID/Frame_ID/Lane_ID/Local_Y/v_Vel columns in feet are converted on
the fly (1 ft = 0.3048 m).

Long profiles are built by chaining lane-keeping source trajectories: each
joint crops the next trajectory to the span where its speed stays within
1 m/s of the current end speed, then inserts a jerk-limited bridge capped
at 0.2 m/s^2 and 0.2 m/s^3. Bridge samples are tagged so the share of real
data is auditable.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .seeding import STREAM_LEAD, stream

FT_TO_M = 0.3048
BRIDGE_TAG = -1  # source tag for bridge samples

SCHEMA_COLUMNS = ("vehicle_id", "frame", "lane", "local_y_m", "speed_mps")
NGSIM_COLUMNS = {"Vehicle_ID": "vehicle_id", "Frame_ID": "frame",
                 "Lane_ID": "lane", "Local_Y": "local_y_m", "v_Vel": "speed_mps"}


class TrajectoryParseError(ValueError):
    """Malformed trajectory input; message names the row and column."""


@dataclass(frozen=True)
class TrajectoryRecord:
    vehicle_id: int
    frame: int       # 10 Hz frame index
    lane: int
    local_y_m: float
    speed_mps: float


@dataclass
class LeadProfile:
    """Speed series at fixed dt with a per-sample source tag.

    sources holds the originating vehicle id per sample, BRIDGE_TAG for
    synthetic joins and SYNTH_TAG-like ids for generated profiles.
    """

    speeds: np.ndarray
    sources: np.ndarray
    dt: float = 0.1

    def __post_init__(self) -> None:
        self.speeds = np.asarray(self.speeds, dtype=float)
        self.sources = np.asarray(self.sources, dtype=np.int64)
        if self.speeds.shape != self.sources.shape:
            raise ValueError("speeds and sources must align")

    @property
    def duration(self) -> float:
        return len(self.speeds) * self.dt

    @property
    def provenance_fraction(self) -> float:
        """Share of samples carrying a source-vehicle tag."""
        if len(self.sources) == 0:
            return 0.0
        return float(np.mean(self.sources != BRIDGE_TAG))

    def accels(self) -> np.ndarray:
        """Per-step accelerations (v_k - v_{k-1}) / dt, zero at the first sample."""
        a = np.zeros_like(self.speeds)
        a[1:] = np.diff(self.speeds) / self.dt
        return a


def parse_trajectories(source) -> list[TrajectoryRecord]:
    """Parse the packaged CSV schema from a path or file object.

    Raw NGSIM-style column names are detected and converted (feet to
    meters). Rows are returned sorted by (vehicle, frame); any malformed
    row raises TrajectoryParseError naming the row and column.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8", newline="") as f:
            text = f.read()
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    header = [h.strip() for h in header]
    if set(SCHEMA_COLUMNS).issubset(header):
        col = {name: header.index(name) for name in SCHEMA_COLUMNS}
        scale = 1.0
    elif set(NGSIM_COLUMNS).issubset(header):
        col = {ours: header.index(theirs) for theirs, ours in NGSIM_COLUMNS.items()}
        scale = FT_TO_M
    else:
        missing = sorted(set(SCHEMA_COLUMNS) - set(header))
        raise TrajectoryParseError(f"row 1: missing column(s) {', '.join(missing)}")

    records = []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        rec = _parse_row(row, row_no, col, scale)
        records.append(rec)
    records.sort(key=lambda r: (r.vehicle_id, r.frame))
    return records


def _parse_row(row, row_no, col, scale) -> TrajectoryRecord:
    def grab(name, cast):
        idx = col[name]
        if idx >= len(row):
            raise TrajectoryParseError(f"row {row_no}: missing column {name}")
        try:
            return cast(row[idx])
        except ValueError:
            raise TrajectoryParseError(
                f"row {row_no}: non-numeric value {row[idx]!r} in column {name}") from None

    speed = grab("speed_mps", float) * scale
    if speed < 0:
        raise TrajectoryParseError(f"row {row_no}: negative speed in column speed_mps")
    return TrajectoryRecord(
        vehicle_id=grab("vehicle_id", lambda s: int(float(s))),
        frame=grab("frame", lambda s: int(float(s))),
        lane=grab("lane", lambda s: int(float(s))),
        local_y_m=grab("local_y_m", float) * scale,
        speed_mps=speed,
    )


def serialize_trajectories(records: list[TrajectoryRecord], path) -> None:
    """Write records in the packaged schema (UTF-8, LF, header row)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SCHEMA_COLUMNS)
        for r in records:
            w.writerow([r.vehicle_id, r.frame, r.lane,
                        repr(r.local_y_m), repr(r.speed_mps)])


def filter_lane_keepers(records: list[TrajectoryRecord]) -> list[tuple[int, int, np.ndarray]]:
    """Keep vehicles that never change lane; order by segment entry time.

    Returns (vehicle_id, lane, speeds) tuples sorted by first frame.
    """
    by_vehicle: dict[int, list[TrajectoryRecord]] = {}
    for r in records:
        by_vehicle.setdefault(r.vehicle_id, []).append(r)
    keepers = []
    for vid, rows in by_vehicle.items():
        rows.sort(key=lambda r: r.frame)
        lanes = {r.lane for r in rows}
        if len(lanes) != 1:
            continue
        keepers.append((rows[0].frame, vid, rows[0].lane,
                        np.array([r.speed_mps for r in rows])))
    keepers.sort(key=lambda t: t[0])
    return [(vid, lane, speeds) for _, vid, lane, speeds in keepers]


def jerk_limited_bridge(v0: float, v1: float, a_cap: float, j_cap: float,
                        dt: float = 0.1) -> np.ndarray:
    """Speed samples moving from v0 to v1 under |a| <= a_cap, |jerk| <= j_cap.

    The acceleration profile is a trapezoid (ramp up at j_cap, hold, ramp
    down); samples are evaluated on the analytic curve, so the per-step
    speed change never exceeds a_cap*dt and the per-step acceleration
    change never exceeds j_cap*dt. The first returned sample is one step
    after v0; the last equals v1 exactly. A zero speed change returns an
    empty array.
    """
    dv = v1 - v0
    if dv == 0.0:
        return np.zeros(0)
    s = np.sign(dv)
    mag = abs(dv)
    if mag >= a_cap * a_cap / j_cap:
        a_pk = a_cap
        t_hold = (mag - a_cap * a_cap / j_cap) / a_cap
    else:
        a_pk = np.sqrt(mag * j_cap)
        t_hold = 0.0
    t_r = a_pk / j_cap
    t_total = 2.0 * t_r + t_hold

    def v_of(t):
        t = np.minimum(t, t_total)
        v = np.where(
            t <= t_r,
            0.5 * j_cap * t * t,
            np.where(
                t <= t_r + t_hold,
                0.5 * j_cap * t_r * t_r + a_pk * (t - t_r),
                mag - 0.5 * j_cap * np.square(np.maximum(t_total - t, 0.0)),
            ),
        )
        return v0 + s * v

    n_samples = int(np.ceil(t_total / dt))
    t = dt * np.arange(1, n_samples + 1)
    out = v_of(t)
    out[-1] = v1
    return out


def extend_profile(profiles: list[tuple[int, np.ndarray]], target_duration: float,
                   a_cap: float = 0.2, j_cap: float = 0.2,
                   dt: float = 0.1) -> LeadProfile:
    """Chain source speed profiles into one series of at least target_duration.

    profiles are (vehicle_id, speeds) in entry order. Each join crops the
    incoming profile to the span between the first and last instant where
    its speed is within 1 m/s of the running end speed, then inserts a
    jerk-limited bridge closing the residual speed difference. Profiles
    with no crop window are skipped; if no profile can ever be joined the
    extension fails. Profiles recycle until the duration is reached.
    """
    if len(profiles) < 2:
        raise ValueError("need at least two source profiles")
    if target_duration <= 0:
        raise ValueError("target_duration must be positive")
    first_vid, first_speeds = profiles[0]
    speeds = [np.asarray(first_speeds, dtype=float)]
    sources = [np.full(len(first_speeds), first_vid, dtype=np.int64)]
    n_target = int(round(target_duration / dt))
    n_have = len(first_speeds)
    idx = 1
    exhausted = 0
    last = 0  # profile index just appended; never chained to itself
    while n_have < n_target:
        cand = idx % len(profiles)
        idx += 1
        end_speed = speeds[-1][-1]
        if cand == last:
            continue
        vid, series = profiles[cand]
        window = np.flatnonzero(np.abs(series - end_speed) <= 1.0)
        if len(window) == 0:
            exhausted += 1
            if exhausted >= len(profiles) - 1:
                raise RuntimeError(
                    f"no source profile joins within 1 m/s of {end_speed:.2f} m/s")
            continue
        exhausted = 0
        last = cand
        cropped = np.asarray(series[window[0]:window[-1] + 1], dtype=float)
        bridge = jerk_limited_bridge(end_speed, float(cropped[0]), a_cap, j_cap, dt)
        if len(bridge):
            speeds.append(bridge)
            sources.append(np.full(len(bridge), BRIDGE_TAG, dtype=np.int64))
            n_have += len(bridge)
        speeds.append(cropped)
        sources.append(np.full(len(cropped), vid, dtype=np.int64))
        n_have += len(cropped)
    return LeadProfile(np.concatenate(speeds)[:n_target],
                       np.concatenate(sources)[:n_target], dt=dt)


def synthesize_profile(duration: float, seed: int, speed_mean: float = 15.0,
                       speed_halfband: float = 3.0, a_cap: float = 1.0,
                       j_cap: float = 0.6, dt: float = 0.1,
                       phase_range: tuple[float, float] = (20.0, 60.0),
                       source_tag: int = 0) -> LeadProfile:
    """Seeded cruise/slow-down/speed-up lead profile within a speed band.

    Fallback when no recorded data is available. Phases hold a target speed
    drawn uniformly from the band for a duration drawn from phase_range;
    transitions are jerk-limited. A zero halfband yields constant speed.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = stream(seed, STREAM_LEAD, source_tag)
    n_target = int(round(duration / dt))
    pieces = [np.array([speed_mean])]
    n_have = 1
    current = speed_mean
    while n_have < n_target:
        target = float(rng.uniform(speed_mean - speed_halfband,
                                   speed_mean + speed_halfband))
        hold = float(rng.uniform(*phase_range))
        ramp = jerk_limited_bridge(current, target, a_cap, j_cap, dt)
        if len(ramp):
            pieces.append(ramp)
            n_have += len(ramp)
        n_hold = int(round(hold / dt))
        pieces.append(np.full(n_hold, target))
        n_have += n_hold
        current = target
    speeds = np.concatenate(pieces)[:n_target]
    return LeadProfile(speeds, np.full(n_target, source_tag, dtype=np.int64), dt=dt)
