import json
from pathlib import Path

import numpy as np
import pytest

from iontangle import cli, scenarios
from iontangle.scenarios import (
    ConfigError,
    TWO_PI,
    resolve_params,
    run_scenario,
    run_steady_cmd,
    run_sweep,
    validate_config,
)


def quick_table1_cfg(tmp_path, **options):
    opts = {"n_points": 21, "t_factor": 40.0}
    opts.update(options)
    return {"output_dir": str(tmp_path), "options": opts}


class TestConfig:
    def test_unknown_top_key(self):
        with pytest.raises(ConfigError):
            validate_config({"nonsense": 1})

    def test_unknown_param_key(self):
        with pytest.raises(ConfigError):
            validate_config({"params": {"nu_khz": 2000}})

    def test_resolve_units(self):
        p = resolve_params({"nu_over_2pi_khz": 2000.0, "eta": 0.1,
                            "omega_a_over_2pi_khz": 200.0}, {})
        assert p.nu == pytest.approx(TWO_PI * 2000.0)
        assert p.eta == 0.1
        # microwave auto-set to -2*lambda
        from iontangle import model

        assert p.omega_mw == pytest.approx(-2 * model.derive(p).lam)

    def test_explicit_microwave_respected(self):
        p = resolve_params({"nu_over_2pi_khz": 2000.0, "eta": 0.1,
                            "omega_a_over_2pi_khz": 200.0,
                            "omega_mw_over_2pi_khz": 1.5}, {})
        assert p.omega_mw == pytest.approx(TWO_PI * 1.5)

    def test_invalid_physical_value(self):
        with pytest.raises(ConfigError):
            resolve_params({"nu_over_2pi_khz": -5.0}, {})


class TestScenarios:
    def test_unknown_scenario(self):
        with pytest.raises(ConfigError):
            run_scenario("fig99", {})

    def test_table1_quick_outputs(self, tmp_path):
        res = run_scenario("table1", quick_table1_cfg(tmp_path))
        assert (tmp_path / "table1" / "meta.json").exists()
        table = tmp_path / "table1" / "populations.csv"
        assert table.exists()
        lines = table.read_text().splitlines()
        comments = [l for l in lines if l.startswith("#")]
        assert len(comments) == 6  # one unit line per column
        header = lines[len(comments)]
        assert header.split(",")[0] == "gamma_r_over_abs_lambda"
        data = [l for l in lines[len(comments) + 1:] if l]
        assert len(data) == 3 * 21
        assert set(res.meta["final_P_S"]) == {"1.0", "0.1", "0.01"}

    def test_rerun_is_byte_identical(self, tmp_path):
        run_scenario("table1", quick_table1_cfg(tmp_path / "a"))
        run_scenario("table1", quick_table1_cfg(tmp_path / "b"))
        a = (tmp_path / "a" / "table1" / "populations.csv").read_bytes()
        b = (tmp_path / "b" / "table1" / "populations.csv").read_bytes()
        assert a == b

    def test_fig2_quick(self, tmp_path):
        cfg = {"output_dir": str(tmp_path),
               "options": {"gamma_over_omega_b_ratios": [5.0], "n_points": 51}}
        res = run_scenario("fig2", cfg)
        assert "5.0" in res.meta["max_ground_population_deviation"]
        fit = res.meta["decay_rate_fit_vs_eliminated"]["5.0"]
        assert fit["fit"] == pytest.approx(fit["eliminated"], rel=0.05)

    def test_fig5_quick_monotone(self, tmp_path):
        cfg = {"output_dir": str(tmp_path),
               "options": {"n_switch_values": [0, 9, 99], "t_final_ms": 400.0,
                           "n_record": 21}}
        res = run_scenario("fig5", cfg)
        finals = res.meta["final_P_S"]
        assert finals["N=0"] < finals["N=9"] < finals["N=99"]
        assert finals["aligned"] > finals["N=99"]

    def test_fig3_quick_small_cutoff(self, tmp_path):
        # n_cut=2 leaves no headroom above the initially occupied n=1
        # level, so the full/effective gap is physically large here;
        # this only exercises the wiring (the real window and cutoff
        # run in the acceptance suite)
        cfg = {"output_dir": str(tmp_path),
               "params": {"n_cut": 2},
               "options": {"t_final_ms": 100.0, "n_points": 11, "n_cut_check": False}}
        res = run_scenario("fig3", cfg)
        assert (tmp_path / "fig3" / "populations_full.csv").exists()
        assert (tmp_path / "fig3" / "populations_effective.csv").exists()
        assert 0 < res.meta["max_gap_P_S_full_vs_effective"] < 0.5
        assert res.meta["final_P_S"]["effective"] > 0.5

    def test_fig7_quick_grid(self, tmp_path):
        cfg = {"output_dir": str(tmp_path),
               "params": {"n_cut": 2},
               "grid": {"gamma_cd_over_gamma_eff": [0.0, 0.4], "nbar_th": [0.0]},
               "options": {"nullspace": False, "n_cut_check": False}}
        res = run_scenario("fig7", cfg)
        lines = [l for l in (tmp_path / "fig7" / "dephasing.csv").read_text().splitlines()
                 if l and not l.startswith("#")]
        assert len(lines) == 1 + 2  # header + grid rows
        assert res.meta["failed_points"] == 0

    def test_sec6_quick(self, tmp_path):
        cfg = {"output_dir": str(tmp_path),
               "params": {"n_cut": 2},
               "grid": {"nbar_th": [0.0]},
               "options": {"nullspace": False, "n_cut_check": False}}
        res = run_scenario("sec6", cfg)
        assert set(res.meta["results"]) == {"engineered_eff,nbar=0.0",
                                            "engineered_branching,nbar=0.0"}


class TestSweep:
    def test_grid_cardinality_and_rows(self, tmp_path):
        cfg = {"output_dir": str(tmp_path),
               "params": {"gamma_eff_over_2pi_khz": 0.2, "n_cut": 2},
               "grid": {"kappa1_over_2pi_khz": [0.2, 0.5, 1.0],
                        "nbar_th": [0.0, 0.5, 1.0]},
               "options": {"nullspace": False}}
        res = run_sweep(cfg)
        lines = [l for l in (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
                 if l and not l.startswith("#")]
        assert len(lines) == 1 + 9
        assert res.meta["grid_points"] == 9

    def test_failed_points_become_rows(self, tmp_path):
        # eta = 0 leaves a degenerate generator: the point must fail as a
        # row, not abort the sweep
        cfg = {"output_dir": str(tmp_path),
               "params": {"gamma_eff_over_2pi_khz": 0.2, "n_cut": 2},
               "grid": {"eta": [0.0, 0.1]},
               "options": {"nullspace": True}}
        res = run_sweep(cfg)
        rows = [l for l in (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
                if l and not l.startswith("#")][1:]
        assert len(rows) == 2
        assert res.meta["failed_points"] == 1
        assert "AmbiguousSteadyStateError" in rows[0] or "Error" in rows[0]

    def test_needs_grid(self):
        with pytest.raises(ConfigError):
            run_sweep({"params": {}})

    def test_unknown_metric(self):
        with pytest.raises(ConfigError):
            run_sweep({"grid": {"eta": [0.1]}, "options": {"metric": "purity"}})


class TestCli:
    def test_list(self, capsys):
        assert cli.main(["list"]) == 0
        out = capsys.readouterr().out.split()
        assert out == list(scenarios.SCENARIO_NAMES)
        assert len(out) == 8

    def test_scenario_roundtrip(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"options": {"n_points": 11, "t_factor": 20.0}}))
        code = cli.main(["scenario", "table1", "--config", str(cfg_path),
                         "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out" / "table1" / "meta.json").exists()
        assert (tmp_path / "out" / "table1" / "populations.csv").exists()

    def test_unknown_scenario_is_config_error(self, capsys):
        assert cli.main(["scenario", "nonsense"]) == 1

    def test_bad_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        assert cli.main(["steady", "--config", str(cfg)]) == 1

    def test_missing_config_file(self, capsys):
        assert cli.main(["steady", "--config", "/nonexistent.json"]) == 1

    def test_numeric_failure_exit_code(self, tmp_path, capsys):
        # eta = 0: degenerate steady state -> exit 2
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "params": {"eta": 0.0, "gamma_eff_over_2pi_khz": 0.2, "n_cut": 2}}))
        assert cli.main(["steady", "--config", str(cfg),
                         "--out", str(tmp_path / "out")]) == 2

    def test_steady_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "params": {"gamma_eff_over_2pi_khz": 0.2, "kappa1_over_2pi_khz": 1.0,
                       "kappa2_over_2pi_khz": 0.1, "n_cut": 2},
            "options": {"nullspace": False}}))
        assert cli.main(["steady", "--config", str(cfg),
                         "--out", str(tmp_path / "out")]) == 0
        obs = (tmp_path / "out" / "steady" / "observables.csv").read_text()
        assert "P_S" in obs
        assert (tmp_path / "out" / "steady" / "reduced_state.csv").exists()

    def test_evolve_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "params": {"gamma_eff_over_2pi_khz": 0.2},
            "options": {"model": "effective_internal", "t_final_ms": 20.0,
                        "n_points": 6, "method": "rk4"}}))
        assert cli.main(["evolve", "--config", str(cfg),
                         "--out", str(tmp_path / "out")]) == 0
        lines = [l for l in (tmp_path / "out" / "evolve" / "trajectory.csv")
                 .read_text().splitlines() if l and not l.startswith("#")]
        assert len(lines) == 1 + 6

    def test_sweep_cli(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "params": {"gamma_eff_over_2pi_khz": 0.2, "n_cut": 2},
            "grid": {"nbar_th": [0.0, 0.5]},
            "options": {"nullspace": False}}))
        assert cli.main(["sweep", "--config", str(cfg),
                         "--out", str(tmp_path / "out")]) == 0
