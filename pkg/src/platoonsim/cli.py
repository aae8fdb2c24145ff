"""Command line entry points: run, sweep, compare, plot.

Examples:
    platoonsim run --functionality cavu --cv-mpr 20 --seed 3 --out out/
    platoonsim sweep --config configs/sweep_synthetic.json --out sweep/ --workers 4
    platoonsim compare sweep_a/summary.csv sweep_b/summary.csv --out delta.csv
    platoonsim plot sweep/summary.csv --metric utilization_coop --out util.csv --render
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import (ConfigError, default_config_dict, load_config,
                     scenario_with_leads)
from .core import VehicleClass
from .engine import ScenarioConfig, TrajectoryLog, run_scenario
from .harness import (SweepConfig, compare_scenarios, emit_plot_data,
                      flatten_metrics, run_sweep, write_csv)

LOG_COLUMNS = ("step", "vehicle_id", "lane", "position_m", "speed_mps",
               "accel_mps2", "command_mps2", "planner_mode")


def write_log_csv(log: TrajectoryLog, path, dt: float) -> None:
    """One row per step and vehicle; planner_mode is -1 for human vehicles."""
    n_steps = log.steps_completed
    n_veh = log.position.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for k in range(n_steps):
            for v in range(n_veh):
                w.writerow([k, v, int(log.lane[k + 1, v]),
                            repr(float(log.position[k + 1, v])),
                            repr(float(log.speed[k + 1, v])),
                            repr(float(log.accel[k + 1, v])),
                            repr(float(log.command[k, v])),
                            int(log.mode[k, v])])


def _load_or_default(path) -> tuple[SweepConfig, dict]:
    if path:
        return load_config(path)
    return SweepConfig(), {"source": "synthetic", "data_dir": None,
                           "a_cap": 0.2, "j_cap": 0.2}


def cmd_run(args) -> int:
    sweep, lead_spec = _load_or_default(args.config)
    scenario = sweep.scenario
    if args.functionality:
        frac = (args.cv_mpr if args.cv_mpr is not None else 20.0) / 100.0 / 2.0
        scenario = replace(scenario, automated_class=VehicleClass(args.functionality),
                           cav_fraction=frac, chv_fraction=frac)
    seed = args.seed if args.seed is not None else scenario.seed
    if args.allow_synthetic:
        lead_spec = dict(lead_spec, source="synthetic")
    scenario = scenario_with_leads(scenario, lead_spec, seed)
    result = run_scenario(scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    row = flatten_metrics(result.metrics, scenario.automated_class.value,
                          (scenario.cav_fraction + scenario.chv_fraction) * 100.0,
                          replicate=0, seed=seed)
    (out_dir / "metrics.json").write_text(json.dumps(row, indent=2) + "\n",
                                          encoding="utf-8")
    if args.save_log:
        write_log_csv(result.log, out_dir / "trajectories.csv", scenario.dt)
    print(json.dumps(row, indent=2))
    return 1 if result.collided else 0


def cmd_sweep(args) -> int:
    sweep, lead_spec = _load_or_default(args.config)
    if args.seeds:
        sweep = replace(sweep, n_seeds=args.seeds)
    if args.master_seed is not None:
        sweep = replace(sweep, master_seed=args.master_seed)
    if args.allow_synthetic:
        lead_spec = dict(lead_spec, source="synthetic")
    if lead_spec["source"] != "synthetic":
        # resolve early so a missing data directory fails before any run
        scenario_with_leads(sweep.scenario, lead_spec, sweep.master_seed)
    runs, summary = run_sweep(sweep, args.out, workers=args.workers,
                              progress=_progress if args.progress else None,
                              lead_spec=lead_spec)
    print(f"wrote {runs} and {summary}")
    return 0


def _progress(done, total):
    sys.stderr.write(f"\r{done}/{total} runs")
    if done == total:
        sys.stderr.write("\n")


def cmd_compare(args) -> int:
    out = compare_scenarios(args.summary_a, args.summary_b, args.out)
    print(f"wrote {out}")
    return 0


def cmd_plot(args) -> int:
    out = emit_plot_data(args.summary, args.metric, args.out, render=args.render)
    print(f"wrote {out}")
    return 0


def cmd_init_config(args) -> int:
    Path(args.out).write_text(json.dumps(default_config_dict(), indent=2) + "\n",
                              encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="platoonsim",
                                description="mixed-traffic cooperative platooning simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("--config", help="config JSON path")
    run_p.add_argument("--functionality", choices=[c.value for c in VehicleClass
                                                   if c.automated])
    run_p.add_argument("--cv-mpr", type=float, help="connected-vehicle share, percent")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--save-log", action="store_true",
                       help="write the full per-step trajectory CSV")
    run_p.add_argument("--allow-synthetic", action="store_true",
                       help="use synthetic lead profiles even if the config names data")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run the functionality x MPR grid")
    sweep_p.add_argument("--config", help="config JSON path")
    sweep_p.add_argument("--out", default="sweep")
    sweep_p.add_argument("--workers", type=int, default=1)
    sweep_p.add_argument("--seeds", type=int, help="override replicates per cell")
    sweep_p.add_argument("--master-seed", type=int)
    sweep_p.add_argument("--progress", action="store_true")
    sweep_p.add_argument("--allow-synthetic", action="store_true",
                         help="fall back to synthetic lead profiles")
    sweep_p.set_defaults(func=cmd_sweep)

    cmp_p = sub.add_parser("compare", help="delta report between two sweep summaries")
    cmp_p.add_argument("summary_a")
    cmp_p.add_argument("summary_b")
    cmp_p.add_argument("--out", default="delta.csv")
    cmp_p.set_defaults(func=cmd_compare)

    plot_p = sub.add_parser("plot", help="tidy per-metric plot data from a summary")
    plot_p.add_argument("summary")
    plot_p.add_argument("--metric", required=True)
    plot_p.add_argument("--out", default="plot.csv")
    plot_p.add_argument("--render", action="store_true", help="also write a PNG")
    plot_p.set_defaults(func=cmd_plot)

    init_p = sub.add_parser("init-config", help="write a config template with defaults")
    init_p.add_argument("--out", default="platoonsim.json")
    init_p.set_defaults(func=cmd_init_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
