import json
from dataclasses import replace

import numpy as np
import pytest

from platoonsim.cli import main as cli_main
from platoonsim.config import (ConfigError, build_lead_profiles,
                               default_config_dict, load_config,
                               scenario_with_leads)
from platoonsim.engine import ScenarioConfig
from platoonsim.harness import (GridMismatchError, SweepConfig,
                                compare_scenarios, emit_plot_data, read_csv,
                                run_sweep, scenario_for_cell)
from platoonsim.seeding import derive_seed
from platoonsim.trajectory import serialize_trajectories, TrajectoryRecord


def tiny_sweep(**kw):
    scenario = ScenarioConfig(duration=20.0, warmup=5.0, n_followers=12, n_lanes=3)
    base = dict(scenario=scenario, functionalities=("cav", "cavu"),
                cv_mpr_percents=(10, 40), n_seeds=2, master_seed=7)
    base.update(kw)
    return SweepConfig(**base)


class TestSeeding:
    def test_derive_is_deterministic_and_label_sensitive(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
        assert derive_seed(1, 2, 3) != derive_seed(2, 2, 3)

    def test_cell_seeds_unique(self):
        seeds = {derive_seed(9, c, r) for c in range(30) for r in range(100)}
        assert len(seeds) == 3000


class TestSweep:
    def test_counts_and_columns(self, tmp_path):
        runs, summary = run_sweep(tiny_sweep(), tmp_path)
        rows = read_csv(runs)
        assert len(rows) == 2 * 2 * 2  # functionality x mpr x seeds
        srows = read_csv(summary)
        assert len(srows) == 4
        assert all(r["n_runs"] == "2" for r in srows)

    def test_byte_reproducible_and_worker_invariant(self, tmp_path):
        r1, s1 = run_sweep(tiny_sweep(), tmp_path / "a")
        r2, s2 = run_sweep(tiny_sweep(), tmp_path / "b", workers=2)
        assert r1.read_bytes() == r2.read_bytes()
        assert s1.read_bytes() == s2.read_bytes()

    def test_composition_rule(self):
        cfg = scenario_for_cell(tiny_sweep(), "cavu_lc", 80.0, 0, 5)
        assert cfg.cav_fraction == pytest.approx(0.40)
        assert cfg.chv_fraction == pytest.approx(0.40)
        comp = cfg.composition()
        n_auto, n_chv, n_thv = comp.counts
        assert (n_auto, n_chv) == (int(0.4 * 12), int(0.4 * 12))


class TestCompare:
    def test_self_compare_all_zero(self, tmp_path):
        _, summary = run_sweep(tiny_sweep(), tmp_path)
        out = compare_scenarios(summary, summary, tmp_path / "delta.csv")
        for row in read_csv(out):
            assert float(row["utilization_coop_delta"]) == 0.0
            assert row["flag_utilization_ordering"] == "0"

    def test_grid_mismatch_lists_cells(self, tmp_path):
        _, s1 = run_sweep(tiny_sweep(), tmp_path / "a")
        _, s2 = run_sweep(tiny_sweep(cv_mpr_percents=(10, 20)), tmp_path / "b")
        with pytest.raises(GridMismatchError, match="unmatched"):
            compare_scenarios(s1, s2, tmp_path / "d.csv")

    def test_single_functionality_join_on_mpr(self, tmp_path):
        _, s1 = run_sweep(tiny_sweep(functionalities=("cav",)), tmp_path / "a")
        _, s2 = run_sweep(tiny_sweep(functionalities=("cavu",)), tmp_path / "b")
        out = compare_scenarios(s1, s2, tmp_path / "d.csv")
        rows = read_csv(out)
        assert [float(r["cv_mpr_percent"]) for r in rows] == [10.0, 40.0]


class TestPlot:
    def test_values_copied_exactly(self, tmp_path):
        _, summary = run_sweep(tiny_sweep(), tmp_path)
        out = emit_plot_data(summary, "utilization_coop", tmp_path / "p.csv")
        plot = read_csv(out)
        srows = {(r["functionality"], float(r["cv_mpr_percent"])): r
                 for r in read_csv(summary)}
        for row in plot:
            src = srows[(row["functionality"], float(row["cv_mpr_percent"]))]
            assert row["mean"] == src["utilization_coop_mean"]
            assert row["std"] == src["utilization_coop_std"]

    def test_unknown_metric_lists_available(self, tmp_path):
        _, summary = run_sweep(tiny_sweep(), tmp_path)
        with pytest.raises(KeyError, match="available"):
            emit_plot_data(summary, "nope", tmp_path / "p.csv")

    def test_empty_summary_gives_header_only(self, tmp_path):
        empty = tmp_path / "empty.csv"
        cols = ",".join(["functionality", "cv_mpr_percent", "n_runs", "n_collided",
                         "utilization_coop_mean", "utilization_coop_std"])
        empty.write_text(cols + "\n", encoding="utf-8")
        out = emit_plot_data(empty, "utilization_coop", tmp_path / "p.csv")
        assert out.read_text().strip() == "cv_mpr_percent,functionality,mean,std"


class TestConfig:
    def test_default_template_round_trips(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(default_config_dict()), encoding="utf-8")
        sweep, lead = load_config(path)
        assert sweep.n_seeds == 100
        assert lead["source"] == "synthetic"
        assert sweep.scenario.human.v_d == 25.0
        assert sweep.scenario.controller.k_p == 0.3

    def test_overrides_and_unknown_keys(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({
            "scenario": {"duration_s": 60.0, "n_followers": 10},
            "human": {"v_d": 30.0},
            "sweep": {"n_seeds": 3},
        }), encoding="utf-8")
        sweep, _ = load_config(path)
        assert sweep.scenario.duration == 60.0
        assert sweep.scenario.human.v_d == 30.0
        assert sweep.n_seeds == 3
        path.write_text(json.dumps({"human": {"bogus": 1}}), encoding="utf-8")
        with pytest.raises(ConfigError, match="bogus"):
            load_config(path)

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"schema_version": 99}), encoding="utf-8")
        with pytest.raises(ConfigError, match="schema_version"):
            load_config(path)

    def test_missing_data_dir_names_fallback_flag(self):
        with pytest.raises(ConfigError, match="allow-synthetic"):
            scenario_with_leads(ScenarioConfig(), {"source": "trajectories",
                                                   "data_dir": None,
                                                   "a_cap": 0.2, "j_cap": 0.2}, 1)

    def test_data_dir_env_override(self, tmp_path, monkeypatch):
        records = []
        for vid in range(4):
            for k in range(400):
                records.append(TrajectoryRecord(vid, k, 1 + vid % 2,
                                                float(k), 14.0 + 0.002 * k))
        serialize_trajectories(records, tmp_path / "data.csv")
        monkeypatch.setenv("PLATOONSIM_DATA_DIR", str(tmp_path))
        cfg = scenario_with_leads(
            ScenarioConfig(duration=30.0, n_lanes=2),
            {"source": "trajectories", "data_dir": None, "a_cap": 0.2, "j_cap": 0.2},
            seed=5)
        assert cfg.lead_profiles is not None
        assert len(cfg.lead_profiles) == 2
        assert cfg.lead_profiles[0].duration >= 30.0

    def test_build_lead_profiles_deterministic(self):
        keepers = [(vid, 1 + vid % 2, np.full(400, 13.0 + 0.3 * vid))
                   for vid in range(6)]
        a = build_lead_profiles(keepers, 2, 120.0, seed=3)
        b = build_lead_profiles(keepers, 2, 120.0, seed=3)
        assert np.array_equal(a[0].speeds, b[0].speeds)
        assert a[0].duration >= 120.0
        diff = [not np.array_equal(a[k].speeds,
                                   build_lead_profiles(keepers, 2, 120.0, seed)[k].speeds)
                for seed in (4, 5, 6) for k in (0, 1)]
        assert any(diff)  # reshuffled source order shows up in some lane


class TestCli:
    def test_run_writes_metrics(self, tmp_path, capsys):
        code = cli_main(["run", "--functionality", "cav", "--cv-mpr", "20",
                         "--seed", "3", "--out", str(tmp_path), "--config",
                         str(self.small_config(tmp_path))])
        assert code == 0
        blob = json.loads((tmp_path / "metrics.json").read_text())
        assert blob["functionality"] == "cav"
        assert 0.0 <= blob["utilization_coop"] <= 1.0

    def test_run_save_log(self, tmp_path):
        code = cli_main(["run", "--functionality", "av", "--cv-mpr", "10",
                         "--out", str(tmp_path), "--save-log", "--config",
                         str(self.small_config(tmp_path))])
        assert code == 0
        text = (tmp_path / "trajectories.csv").read_text()
        header, first = text.splitlines()[:2]
        assert header.startswith("step,vehicle_id,lane")
        assert first.startswith("0,0,")

    def test_sweep_and_plot(self, tmp_path):
        cfgp = self.small_config(tmp_path, sweep=True)
        assert cli_main(["sweep", "--config", str(cfgp),
                         "--out", str(tmp_path / "sw")]) == 0
        assert (tmp_path / "sw" / "summary.csv").exists()
        assert (tmp_path / "sw" / "manifest.json").exists()
        assert cli_main(["plot", str(tmp_path / "sw" / "summary.csv"),
                         "--metric", "utilization_coop",
                         "--out", str(tmp_path / "p.csv")]) == 0
        assert cli_main(["compare", str(tmp_path / "sw" / "summary.csv"),
                         str(tmp_path / "sw" / "summary.csv"),
                         "--out", str(tmp_path / "d.csv")]) == 0

    def test_unknown_metric_is_clean_error(self, tmp_path):
        cfgp = self.small_config(tmp_path, sweep=True)
        cli_main(["sweep", "--config", str(cfgp), "--out", str(tmp_path / "sw")])
        code = cli_main(["plot", str(tmp_path / "sw" / "summary.csv"),
                         "--metric", "nope", "--out", str(tmp_path / "p.csv")])
        assert code == 2

    def test_init_config(self, tmp_path):
        out = tmp_path / "template.json"
        assert cli_main(["init-config", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["schema_version"] == 1

    @staticmethod
    def small_config(tmp_path, sweep=False):
        cfg = {
            "scenario": {"duration_s": 15.0, "warmup_s": 5.0, "n_followers": 10,
                         "n_lanes": 2},
            "sweep": {"functionalities": ["cav"], "cv_mpr_percents": [10, 20],
                      "n_seeds": 1, "master_seed": 5},
        }
        p = tmp_path / ("sweep.json" if sweep else "run.json")
        p.write_text(json.dumps(cfg), encoding="utf-8")
        return p
