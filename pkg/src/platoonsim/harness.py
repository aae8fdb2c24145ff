"""Experiment harness: market-penetration sweeps, Monte Carlo replication,
aggregation, comparison and plot-ready exports.

A sweep crosses automated functionality variants with connected-vehicle
penetration points; each cell runs n_seeds replicates whose seeds derive
deterministically from (master seed, cell index, replicate index), so any
cell reproduces in isolation and a full sweep is byte-stable regardless of
worker scheduling.

CSV schemas (v1, UTF-8, LF, header row):

runs CSV      one row per run
summary CSV   one row per (functionality, cv_mpr) cell with mean/std columns
delta CSV     per-cell metric deltas between two summaries
plot CSV      (cv_mpr, functionality, mean, std) for one metric
"""
from __future__ import annotations

import csv
import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import VehicleClass
from .engine import ScenarioConfig, run_scenario
from .metrics import RunMetrics
from .seeding import derive_seed

SCHEMA_VERSION = 1

RUN_COLUMNS = (
    "functionality", "cv_mpr_percent", "replicate", "seed", "collided",
    "utilization_cacc", "utilization_caccu", "utilization_coop",
    "max_unsafe_spacing", "n_lane_changes",
    "cav_accel_rms", "cav_min_speed", "cav_fuel_total", "cav_fuel_rate_mean",
    "cav_fuel_per_km",
    "fleet_accel_rms", "fleet_min_speed", "fleet_fuel_total", "fleet_fuel_rate_mean",
    "fleet_fuel_per_km",
)
METRIC_COLUMNS = RUN_COLUMNS[5:]

DEFAULT_CV_MPR_PERCENTS = (2, 6, 10, 20, 40, 60, 80)
DEFAULT_FUNCTIONALITIES = ("av", "cav", "cavu", "cavu_lc")


@dataclass(frozen=True)
class SweepConfig:
    """Grid description; scenario holds everything shared across cells."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    functionalities: tuple[str, ...] = DEFAULT_FUNCTIONALITIES
    cv_mpr_percents: tuple[float, ...] = DEFAULT_CV_MPR_PERCENTS
    n_seeds: int = 100
    master_seed: int = 2024

    def cells(self) -> list[tuple[int, str, float]]:
        out = []
        idx = 0
        for fn in self.functionalities:
            for mpr in self.cv_mpr_percents:
                out.append((idx, fn, float(mpr)))
                idx += 1
        return out


def scenario_for_cell(sweep: SweepConfig, functionality: str, cv_mpr_percent: float,
                      replicate: int, cell_index: int) -> ScenarioConfig:
    """Concrete run config for one replicate of one grid cell.

    The connected-vehicle share splits evenly between automated and human
    connected vehicles. Seeds mix (master, mpr-point, replicate) and leave
    the functionality out, so every functionality faces the identical fleet
    placement and traffic at a given replicate: cross-functionality
    comparisons are paired.
    """
    frac = cv_mpr_percent / 100.0 / 2.0
    mpr_index = cell_index % len(sweep.cv_mpr_percents)
    seed = derive_seed(sweep.master_seed, mpr_index, replicate)
    return replace(sweep.scenario,
                   automated_class=VehicleClass(functionality),
                   cav_fraction=frac, chv_fraction=frac, seed=seed)


def run_row(sweep: SweepConfig, cell_index: int, functionality: str,
            cv_mpr_percent: float, replicate: int,
            lead_spec: dict | None = None) -> dict:
    cfg = scenario_for_cell(sweep, functionality, cv_mpr_percent, replicate, cell_index)
    if lead_spec and lead_spec.get("source", "synthetic") != "synthetic":
        from .config import scenario_with_leads
        cfg = scenario_with_leads(cfg, lead_spec, cfg.seed)
    result = run_scenario(cfg)
    return flatten_metrics(result.metrics, functionality, cv_mpr_percent,
                           replicate, cfg.seed)


def flatten_metrics(m: RunMetrics, functionality: str, cv_mpr_percent: float,
                    replicate: int, seed: int) -> dict:
    return {
        "functionality": functionality,
        "cv_mpr_percent": cv_mpr_percent,
        "replicate": replicate,
        "seed": seed,
        "collided": int(m.collided),
        "utilization_cacc": m.utilization_cacc,
        "utilization_caccu": m.utilization_caccu,
        "utilization_coop": m.utilization_coop,
        "max_unsafe_spacing": m.max_unsafe_spacing,
        "n_lane_changes": m.n_lane_changes,
        "cav_accel_rms": m.automated.accel_rms,
        "cav_min_speed": m.automated.min_speed,
        "cav_fuel_total": m.automated.fuel_total,
        "cav_fuel_rate_mean": m.automated.fuel_rate_mean,
        "cav_fuel_per_km": m.automated.fuel_per_km,
        "fleet_accel_rms": m.fleet.accel_rms,
        "fleet_min_speed": m.fleet.min_speed,
        "fleet_fuel_total": m.fleet.fuel_total,
        "fleet_fuel_rate_mean": m.fleet.fuel_rate_mean,
        "fleet_fuel_per_km": m.fleet.fuel_per_km,
    }


def _run_task(args) -> tuple[int, int, dict]:
    sweep, cell_index, fn, mpr, rep, lead_spec = args
    return cell_index, rep, run_row(sweep, cell_index, fn, mpr, rep, lead_spec)


def run_sweep(sweep: SweepConfig, out_dir, workers: int = 1, progress=None,
              lead_spec: dict | None = None) -> tuple[Path, Path]:
    """Execute the grid; write runs.csv and summary.csv, return their paths.

    Results are reduced in (cell, replicate) order whatever the completion
    order, so outputs are byte-identical across worker counts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(sweep, idx, fn, mpr, rep, lead_spec)
             for idx, fn, mpr in sweep.cells()
             for rep in range(sweep.n_seeds)]
    results: dict[tuple[int, int], dict] = {}
    if workers <= 1:
        for t in tasks:
            idx, rep, row = _run_task(t)
            results[(idx, rep)] = row
            if progress:
                progress(len(results), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, rep, row in pool.map(_run_task, tasks, chunksize=1):
                results[(idx, rep)] = row
                if progress:
                    progress(len(results), len(tasks))
    rows = [results[key] for key in sorted(results)]
    runs_path = out_dir / "runs.csv"
    write_csv(runs_path, RUN_COLUMNS, rows)
    summary_rows = summarize(rows)
    summary_path = out_dir / "summary.csv"
    write_csv(summary_path, summary_columns(), summary_rows)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "n_seeds": sweep.n_seeds,
        "master_seed": sweep.master_seed,
        "functionalities": list(sweep.functionalities),
        "cv_mpr_percents": list(sweep.cv_mpr_percents),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")
    return runs_path, summary_path


def summary_columns() -> tuple[str, ...]:
    cols = ["functionality", "cv_mpr_percent", "n_runs", "n_collided"]
    for m in METRIC_COLUMNS:
        cols.append(f"{m}_mean")
        cols.append(f"{m}_std")
    return tuple(cols)


def summarize(rows: list[dict]) -> list[dict]:
    """Per-cell mean/std over replicates, ordered by (functionality, mpr)."""
    cells: dict[tuple[str, float], list[dict]] = {}
    for r in rows:
        cells.setdefault((r["functionality"], float(r["cv_mpr_percent"])), []).append(r)
    out = []
    for (fn, mpr), group in sorted(cells.items()):
        row = {"functionality": fn, "cv_mpr_percent": mpr, "n_runs": len(group),
               "n_collided": sum(int(g["collided"]) for g in group)}
        for m in METRIC_COLUMNS:
            vals = np.array([float(g[m]) for g in group])
            row[f"{m}_mean"] = float(np.mean(vals))
            row[f"{m}_std"] = float(np.std(vals))
        out.append(row)
    return out


def write_csv(path, columns, rows) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _fmt(r.get(c, "")) for c in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


class GridMismatchError(ValueError):
    """The two summaries cover different sweep cells."""


def compare_scenarios(summary_a, summary_b, out_path) -> Path:
    """Per-cell deltas (b - a) and ratios with pooled std; flags utilization
    ordering violations (cooperative utilization lower in b at mpr > 0)."""
    a_rows = read_csv(summary_a)
    b_rows = read_csv(summary_b)
    a_map = {_cell_key(r) for r in a_rows}
    b_map = {_cell_key(r) for r in b_rows}
    join_on_mpr = False
    if a_map != b_map:
        a_fns = {r["functionality"] for r in a_rows}
        b_fns = {r["functionality"] for r in b_rows}
        a_mprs = sorted({float(r["cv_mpr_percent"]) for r in a_rows})
        b_mprs = sorted({float(r["cv_mpr_percent"]) for r in b_rows})
        if len(a_fns) == 1 and len(b_fns) == 1 and a_mprs == b_mprs:
            join_on_mpr = True
        else:
            missing = sorted(a_map ^ b_map)
            raise GridMismatchError(f"sweep grids differ; unmatched cells: {missing}")
    key = (lambda r: float(r["cv_mpr_percent"])) if join_on_mpr else _cell_key
    b_idx = {key(r): r for r in b_rows}
    out_rows = []
    for ra in sorted(a_rows, key=lambda r: (r["functionality"], float(r["cv_mpr_percent"]))):
        rb = b_idx[key(ra)]
        row = {
            "functionality_a": ra["functionality"], "functionality_b": rb["functionality"],
            "cv_mpr_percent": float(ra["cv_mpr_percent"]),
        }
        for m in METRIC_COLUMNS:
            ma, mb = float(ra[f"{m}_mean"]), float(rb[f"{m}_mean"])
            sa, sb = float(ra[f"{m}_std"]), float(rb[f"{m}_std"])
            row[f"{m}_delta"] = mb - ma
            row[f"{m}_ratio"] = mb / ma if ma != 0 else np.nan
            row[f"{m}_pooled_std"] = float(np.sqrt(0.5 * (sa * sa + sb * sb)))
        row["flag_utilization_ordering"] = int(
            float(ra["cv_mpr_percent"]) > 0
            and row["utilization_coop_delta"] < 0)
        out_rows.append(row)
    cols = list(out_rows[0].keys()) if out_rows else []
    write_csv(Path(out_path), cols, out_rows)
    return Path(out_path)


def _cell_key(row) -> tuple[str, float]:
    return row["functionality"], float(row["cv_mpr_percent"])


def emit_plot_data(summary_path, metric: str, out_path, render: bool = False) -> Path:
    """Tidy (cv_mpr, functionality, mean, std) file for one metric; values are
    copied from the summary, never recomputed. render=True also writes a PNG."""
    rows = read_csv(summary_path)
    if rows and f"{metric}_mean" not in rows[0]:
        available = sorted(c[:-5] for c in rows[0] if c.endswith("_mean"))
        raise KeyError(f"unknown metric {metric!r}; available: {', '.join(available)}")
    out_rows = [{
        "cv_mpr_percent": float(r["cv_mpr_percent"]),
        "functionality": r["functionality"],
        "mean": float(r[f"{metric}_mean"]),
        "std": float(r[f"{metric}_std"]),
    } for r in sorted(rows, key=lambda r: (r["functionality"], float(r["cv_mpr_percent"])))]
    out_path = Path(out_path)
    write_csv(out_path, ("cv_mpr_percent", "functionality", "mean", "std"), out_rows)
    if render and out_rows:
        _render_png(out_rows, metric, out_path.with_suffix(".png"))
    return out_path


def _render_png(rows, metric, png_path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    by_fn: dict[str, list] = {}
    for r in rows:
        by_fn.setdefault(r["functionality"], []).append(r)
    for fn, pts in sorted(by_fn.items()):
        pts.sort(key=lambda p: p["cv_mpr_percent"])
        x = [p["cv_mpr_percent"] for p in pts]
        y = [p["mean"] for p in pts]
        err = [p["std"] for p in pts]
        ax.errorbar(x, y, yerr=err, marker="o", capsize=3, label=fn)
    ax.set_xlabel("connected vehicle share (%)")
    ax.set_ylabel(metric)
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
