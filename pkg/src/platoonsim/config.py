"""Versioned JSON configuration for scenarios and sweeps.

Every model parameter is exposed with its default; a config file only
overrides what it names. Lead profiles come either from the synthetic
generator or from trajectory CSVs in a data directory; the environment
variable PLATOONSIM_DATA_DIR overrides the configured directory (and
nothing else is read from the environment).
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import replace
from pathlib import Path

from .control import ControllerParams
from .core import VehicleClass
from .dynamics import DynamicsParams
from .engine import IdentifyConfig, ScenarioConfig
from .harness import SweepConfig
from .human import HumanParams
from .identify import SensorNoise
from .lanechange import MobilParams
from .metrics import FuelModelParams
from .seeding import STREAM_LEAD, stream
from .trajectory import LeadProfile, extend_profile, filter_lane_keepers, parse_trajectories

SCHEMA_VERSION = 1
DATA_DIR_ENV = "PLATOONSIM_DATA_DIR"


class ConfigError(ValueError):
    pass


_SECTION_TYPES = {
    "human": HumanParams,
    "controller": ControllerParams,
    "dynamics": DynamicsParams,
    "sensor_noise": SensorNoise,
    "identification": IdentifyConfig,
    "mobil": MobilParams,
    "fuel": FuelModelParams,
}

_SECTION_FIELDS = {
    "human": "human", "controller": "controller", "dynamics": "dynamics",
    "sensor_noise": "noise", "identification": "identify", "mobil": "mobil",
    "fuel": "fuel",
}

_SCENARIO_KEYS = {
    "dt": "dt", "duration_s": "duration", "warmup_s": "warmup",
    "n_followers": "n_followers", "n_lanes": "n_lanes",
    "vehicle_length_m": "vehicle_length", "lane_width_m": "lane_width",
    "seed": "seed", "lead_speed_mean": "lead_speed_mean",
    "lead_speed_halfband": "lead_speed_halfband",
    "automated_class": "automated_class",
}


def _build_section(name: str, overrides: dict):
    cls = _SECTION_TYPES[name]
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - valid
    if unknown:
        raise ConfigError(f"{name}: unknown parameter(s) {sorted(unknown)}")
    return cls(**overrides)


def load_config(path) -> tuple[SweepConfig, dict]:
    """Parse a config file into a SweepConfig plus the lead-source spec."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")
    scenario_kwargs = {}
    sc = dict(raw.get("scenario", {}))
    lead = sc.pop("lead", {})
    for key, value in sc.items():
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"scenario: unknown key {key!r}")
        if key == "automated_class":
            value = VehicleClass(value)
        scenario_kwargs[_SCENARIO_KEYS[key]] = value
    for section, attr in _SECTION_FIELDS.items():
        if section in raw:
            scenario_kwargs[attr] = _build_section(section, raw[section])
    scenario = ScenarioConfig(**scenario_kwargs)
    sw = raw.get("sweep", {})
    sweep = SweepConfig(
        scenario=scenario,
        functionalities=tuple(sw.get("functionalities",
                                     ("av", "cav", "cavu", "cavu_lc"))),
        cv_mpr_percents=tuple(sw.get("cv_mpr_percents", (2, 6, 10, 20, 40, 60, 80))),
        n_seeds=int(sw.get("n_seeds", 100)),
        master_seed=int(sw.get("master_seed", 2024)),
    )
    lead_spec = {
        "source": lead.get("source", "synthetic"),
        "data_dir": lead.get("data_dir"),
        "a_cap": lead.get("a_cap", 0.2),
        "j_cap": lead.get("j_cap", 0.2),
    }
    if lead_spec["source"] not in ("synthetic", "trajectories"):
        raise ConfigError(f"lead.source must be 'synthetic' or 'trajectories', "
                          f"got {lead_spec['source']!r}")
    return sweep, lead_spec


def resolve_data_dir(lead_spec: dict) -> Path | None:
    env = os.environ.get(DATA_DIR_ENV)
    raw = env or lead_spec.get("data_dir")
    return Path(raw) if raw else None


_KEEPER_CACHE: dict[str, list] = {}


def load_keepers(data_dir: Path) -> list:
    """Lane-keeping speed profiles from every trajectory CSV in a directory."""
    key = str(Path(data_dir).resolve())
    if key in _KEEPER_CACHE:
        return _KEEPER_CACHE[key]
    files = sorted(Path(data_dir).glob("*.csv")) + sorted(Path(data_dir).glob("*.txt"))
    if not files:
        raise ConfigError(f"no trajectory files (*.csv, *.txt) in {data_dir}")
    records = []
    for f in files:
        records.extend(parse_trajectories(f))
    keepers = filter_lane_keepers(records)
    if len(keepers) < 2:
        raise ConfigError(f"fewer than two lane-keeping vehicles in {data_dir}")
    _KEEPER_CACHE[key] = keepers
    return keepers


def build_lead_profiles(keepers: list, n_lanes: int, duration: float, seed: int,
                        dt: float = 0.1, a_cap: float = 0.2,
                        j_cap: float = 0.2) -> tuple[LeadProfile, ...]:
    """One extended profile per simulation lane from recorded lane keepers.

    Recorded lanes cycle onto simulation lanes; within a lane the source
    order is reshuffled per run seed (random selection and sequencing of
    lead trajectories), then chained by the capped-bridge extension.
    """
    by_lane: dict[int, list[tuple[int, object]]] = {}
    for vid, lane, speeds in keepers:
        by_lane.setdefault(int(lane), []).append((vid, speeds))
    data_lanes = sorted(by_lane)
    profiles = []
    for lane in range(n_lanes):
        pool = by_lane[data_lanes[lane % len(data_lanes)]]
        if len(pool) < 2:
            pool = [kv for group in by_lane.values() for kv in group]
        rng = stream(seed, STREAM_LEAD, 100 + lane)
        order = rng.permutation(len(pool))
        shuffled = [pool[i] for i in order]
        profiles.append(extend_profile(shuffled, duration + dt, a_cap=a_cap,
                                       j_cap=j_cap, dt=dt))
    return tuple(profiles)


def scenario_with_leads(scenario: ScenarioConfig, lead_spec: dict,
                        seed: int) -> ScenarioConfig:
    """Attach data-driven lead profiles for one run when configured."""
    if lead_spec["source"] == "synthetic":
        return replace(scenario, seed=seed)
    data_dir = resolve_data_dir(lead_spec)
    if data_dir is None:
        raise ConfigError(
            "lead.source is 'trajectories' but no data directory is set; "
            f"set lead.data_dir or {DATA_DIR_ENV}, or rerun with --allow-synthetic")
    keepers = load_keepers(data_dir)
    profiles = build_lead_profiles(keepers, scenario.n_lanes, scenario.duration,
                                   seed, scenario.dt,
                                   lead_spec["a_cap"], lead_spec["j_cap"])
    return replace(scenario, seed=seed, lead_profiles=profiles)


def default_config_dict() -> dict:
    """A complete config with every default spelled out (template export)."""
    out = {"schema_version": SCHEMA_VERSION}
    out["scenario"] = {
        "dt": 0.1, "duration_s": 1200.0, "warmup_s": 60.0, "n_followers": 100,
        "n_lanes": 5, "vehicle_length_m": 5.0, "lane_width_m": 3.5,
        "lead_speed_mean": 15.0, "lead_speed_halfband": 3.0,
        "lead": {"source": "synthetic", "data_dir": None, "a_cap": 0.2, "j_cap": 0.2},
    }
    out["sweep"] = {"functionalities": ["av", "cav", "cavu", "cavu_lc"],
                    "cv_mpr_percents": [2, 6, 10, 20, 40, 60, 80],
                    "n_seeds": 100, "master_seed": 2024}
    for section, cls in _SECTION_TYPES.items():
        out[section] = {f.name: getattr(cls(), f.name)
                        for f in dataclasses.fields(cls)
                        if f.name != "ff_time_constant"}
    return out
