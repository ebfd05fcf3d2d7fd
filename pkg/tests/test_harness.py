"""Config validation, CSV schema, manifests, CLI exit codes, determinism."""

import json
import os
import subprocess
import sys

import pytest

from outburst.cli import main
from outburst.commands import cmd_estimate_mu, cmd_shape_test, cmd_simulate
from outburst.config import (
    OUTPUT_DIR_ENV,
    ConfigError,
    load_config,
    load_config_file,
)
from outburst.dynamics import InitialSet, PoissonField, RadiusLaw, init, run_until
from outburst.eventlog import parse_event_log, render_event_log, replay_check


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


class TestConfig:
    def test_minimal(self):
        cfg = load_config({"seed": 1})
        assert cfg.dimension == 2
        assert cfg.stepper == "thinning"
        assert cfg.law().gamma == 1.0

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="'distnaces'"):
            load_config({"seed": 1, "distnaces": [1, 2, 3]})

    def test_nested_unknown_key_named(self):
        with pytest.raises(ConfigError, match="radius_law"):
            load_config({"seed": 1, "radius_law": {"kind": "deterministic", "radius": 1.0}})

    def test_missing_seed(self):
        with pytest.raises(ConfigError, match="seed"):
            load_config({})

    def test_bad_values_named(self):
        with pytest.raises(ConfigError, match="dimension"):
            load_config({"seed": 1, "dimension": 0})
        with pytest.raises(ConfigError, match="stepper"):
            load_config({"seed": 1, "stepper": "magic"})
        with pytest.raises(ConfigError, match="t_max"):
            load_config({"seed": 1, "t_max": -2.0})
        with pytest.raises(ConfigError, match="distances"):
            load_config({"seed": 1, "distances": [1.0, "x"]})
        with pytest.raises(ConfigError, match="direction"):
            load_config({"seed": 1, "direction": [0.0, 0.0]})
        with pytest.raises(ConfigError, match="initial_set"):
            load_config({"seed": 1, "initial_set": {"shape": "cube"}})

    def test_overrides_win(self):
        cfg = load_config({"seed": 1, "replications": 3}, overrides={"seed": 9})
        assert cfg.seed == 9 and cfg.replications == 3

    def test_env_var_default_output_dir(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "from_env"))
        cfg = load_config({"seed": 1})
        assert cfg.resolved_output_dir() == tmp_path / "from_env"

    def test_config_file_roundtrip(self, tmp_path):
        path = write_json(tmp_path / "c.json", {"seed": 5, "n_max": 3})
        cfg = load_config_file(path)
        assert cfg.seed == 5 and cfg.n_max == 3

    def test_manifest_is_a_valid_config(self, tmp_path):
        out = tmp_path / "run"
        cfg = load_config({"seed": 3, "n_max": 5, "output_dir": str(out)})
        cmd_simulate(cfg)
        replayed = load_config_file(out / "simulate_manifest.json")
        assert replayed.seed == 3 and replayed.n_max == 5


class TestEventLogFormat:
    def run_state(self, seed=21, n=25):
        law = RadiusLaw.uniform_interval(0.5, 1.5)
        state = init(InitialSet.ball((0.0, 0.0), law.gamma), law, 2, seed=seed)
        run_until(state, n_max=n, field=PoissonField(seed, law, 2))
        return state

    def test_header_and_initial_row(self):
        state = self.run_state(n=0)
        lines = render_event_log(state).splitlines()
        assert lines[0] == "n,t,x0,x1,r"
        assert lines[1].startswith("-1,0,")
        assert len(lines) == 2

    def test_roundtrip_bit_exact(self):
        state = self.run_state()
        parsed = parse_event_log(render_event_log(state))
        assert parsed.d == 2
        assert parsed.initial_balls == list(state.initial_balls)
        assert parsed.events == state.log  # 17 significant digits round-trip

    def test_snapshot_is_time_prefix(self):
        state = self.run_state()
        t_mid = (state.log[9].time + state.log[10].time) / 2
        parsed = parse_event_log(render_event_log(state, t_limit=t_mid))
        assert len(parsed.events) == 10  # region constant between events

    def test_replay_check_accepts_real_log(self):
        report = replay_check(parse_event_log(render_event_log(self.run_state())))
        assert report.ok, report.problems

    def test_replay_check_catches_tampering(self):
        state = self.run_state()
        text = render_event_log(state)
        lines = text.splitlines()
        row = lines[5].split(",")
        row[2] = "1000.0"  # teleported outburst: breaks connectivity
        lines[5] = ",".join(row)
        report = replay_check(parse_event_log("\n".join(lines) + "\n"))
        assert not report.ok
        assert any("outside the prior region" in p for p in report.problems)

    def test_replay_check_catches_time_disorder(self):
        state = self.run_state()
        lines = render_event_log(state).splitlines()
        row = lines[6].split(",")
        row[1] = "0.0"
        lines[6] = ",".join(row)
        report = replay_check(parse_event_log("\n".join(lines) + "\n"))
        assert not report.ok
        assert any("not greater than previous" in p for p in report.problems)


class TestSimulateCommand:
    def test_n_max_zero_writes_initial_row_only(self, tmp_path):
        out = tmp_path / "o"
        cmd_simulate(load_config({"seed": 2, "n_max": 0, "output_dir": str(out)}))
        lines = (out / "rep0000.csv").read_text().splitlines()
        assert len(lines) == 2 and lines[1].startswith("-1,")

    def test_same_seed_byte_identical(self, tmp_path):
        for sub in ("a", "b"):
            cfg = load_config(
                {"seed": 4, "n_max": 40, "replications": 2, "output_dir": str(tmp_path / sub)}
            )
            cmd_simulate(cfg)
        for name in ("rep0000.csv", "rep0001.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_parallelism_does_not_change_bytes(self, tmp_path):
        for sub, workers in (("w1", 1), ("w2", 2)):
            cfg = load_config(
                {
                    "seed": 4,
                    "n_max": 30,
                    "replications": 3,
                    "workers": workers,
                    "output_dir": str(tmp_path / sub),
                }
            )
            cmd_simulate(cfg)
        for rep in range(3):
            name = f"rep{rep:04d}.csv"
            assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()

    def test_manifest_lists_every_artifact(self, tmp_path):
        out = tmp_path / "o"
        cfg = load_config(
            {
                "seed": 6,
                "n_max": 10,
                "replications": 2,
                "snapshot_times": [0.5],
                "output_dir": str(out),
            }
        )
        cmd_simulate(cfg)
        manifest = json.loads((out / "simulate_manifest.json").read_text())
        listed = set(manifest["artifacts"])
        on_disk = {p.name for p in out.iterdir()} - {"simulate_manifest.json"}
        assert listed == on_disk
        assert len(manifest["replication_seeds"]) == 2
        assert manifest["engine_version"]

    def test_manifest_replay_reproduces_bytes(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        cmd_simulate(load_config({"seed": 8, "n_max": 20, "output_dir": str(out1)}))
        replayed = load_config_file(out1 / "simulate_manifest.json", {"output_dir": str(out2)})
        cmd_simulate(replayed)
        assert (out1 / "rep0000.csv").read_bytes() == (out2 / "rep0000.csv").read_bytes()

    def test_rate_stepper_config(self, tmp_path):
        out = tmp_path / "o"
        cfg = load_config({"seed": 10, "n_max": 8, "stepper": "rate", "output_dir": str(out)})
        cmd_simulate(cfg)
        report = replay_check(parse_event_log((out / "rep0000.csv").read_text()))
        assert report.ok

    def test_needs_stop_rule(self, tmp_path):
        with pytest.raises(ConfigError, match="t_max"):
            cmd_simulate(load_config({"seed": 1, "output_dir": str(tmp_path)}))


class TestEstimateMuCommand:
    def test_writes_json_and_manifest(self, tmp_path):
        out = tmp_path / "mu"
        cfg = load_config(
            {
                "seed": 30,
                "distances": [2.0, 3.0, 4.0],
                "replications": 4,
                "output_dir": str(out),
            }
        )
        assert cmd_estimate_mu(cfg) == 0
        est = json.loads((out / "mu_estimate.json").read_text())
        assert est["mu_hat"] > 0
        assert set(est) >= {"mu_hat", "ci_low", "ci_high", "distances", "per_distance_means"}
        manifest = json.loads((out / "estimate-mu_manifest.json").read_text())
        assert manifest["artifacts"] == ["mu_estimate.json"]
        assert len(manifest["replication_seeds"]) == 12

    def test_single_rep_flags_degenerate_ci(self, tmp_path):
        out = tmp_path / "mu1"
        cfg = load_config(
            {"seed": 31, "distances": [2.0, 3.0, 4.0], "replications": 1, "output_dir": str(out)}
        )
        cmd_estimate_mu(cfg)
        est = json.loads((out / "mu_estimate.json").read_text())
        assert est["degenerate"] is True

    def test_needs_distances(self, tmp_path):
        with pytest.raises(ConfigError, match="distances"):
            cmd_estimate_mu(load_config({"seed": 1, "output_dir": str(tmp_path)}))


class TestShapeTestCommand:
    def test_reports_and_summary(self, tmp_path):
        out = tmp_path / "shape"
        cfg = load_config(
            {
                "seed": 40,
                "t_max": 4.0,
                "epsilon": 0.5,
                "mu": 1.05,
                "replications": 3,
                "output_dir": str(out),
            }
        )
        assert cmd_shape_test(cfg) == 0
        summary = json.loads((out / "shape_summary.json").read_text())
        assert 0.0 <= summary["pass_fraction"] <= 1.0
        reports = [json.loads((out / f"shape_rep{r:04d}.json").read_text()) for r in range(3)]
        assert all(r["t"] == 4.0 for r in reports)

    def test_mu_file_input(self, tmp_path):
        mu_file = write_json(tmp_path / "mu.json", {"mu_hat": 1.1})
        out = tmp_path / "shape"
        cfg = load_config(
            {
                "seed": 41,
                "t_max": 3.0,
                "epsilon": 0.5,
                "mu_file": mu_file,
                "output_dir": str(out),
            }
        )
        assert cmd_shape_test(cfg) == 0
        assert json.loads((out / "shape_summary.json").read_text())["mu"] == 1.1

    def test_missing_mu_is_config_error(self, tmp_path):
        cfg = load_config(
            {"seed": 42, "t_max": 3.0, "epsilon": 0.5, "output_dir": str(tmp_path)}
        )
        with pytest.raises(ConfigError, match="mu"):
            cmd_shape_test(cfg)

    def test_loose_epsilon_outer_always_holds(self, tmp_path):
        # At eps=1.0 the outer bound is twice the expected radius; the
        # extent cannot reach it at this scale.
        out = tmp_path / "loose"
        cfg = load_config(
            {
                "seed": 43,
                "t_max": 8.0,
                "epsilon": 1.0,
                "mu": 1.06,
                "replications": 10,
                "output_dir": str(out),
            }
        )
        cmd_shape_test(cfg)
        summary = json.loads((out / "shape_summary.json").read_text())
        assert summary["outer_fraction"] == 1.0


class TestCLI:
    def test_config_error_exit_code_1(self, tmp_path, capsys):
        path = write_json(tmp_path / "bad.json", {"seed": 1, "bogus_key": 2})
        assert main(["simulate", "--config", path]) == 1
        assert "bogus_key" in capsys.readouterr().err

    def test_replay_failure_exit_code_2(self, tmp_path):
        bad = tmp_path / "rep0000.csv"
        bad.write_text("n,t,x0,x1,r\n-1,0,0,0,1\n0,0.5,50,50,1\n")
        assert main(["replay-check", str(bad)]) == 2

    def test_simulate_then_replay_check_via_cli(self, tmp_path):
        out = tmp_path / "sim"
        path = write_json(
            tmp_path / "c.json",
            {"seed": 3, "n_max": 50, "replications": 2, "output_dir": str(out)},
        )
        assert main(["simulate", "--config", path]) == 0
        assert main(["replay-check", str(out)]) == 0

    def test_flag_overrides_seed(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        path1 = write_json(tmp_path / "c1.json", {"seed": 1, "n_max": 10, "output_dir": str(out1)})
        path2 = write_json(tmp_path / "c2.json", {"seed": 2, "n_max": 10, "output_dir": str(out2)})
        assert main(["simulate", "--config", path1, "--seed", "2"]) == 0
        assert main(["simulate", "--config", path2]) == 0
        assert (out1 / "rep0000.csv").read_bytes() == (out2 / "rep0000.csv").read_bytes()

    def test_console_entry_point(self, tmp_path):
        env = dict(os.environ, **{OUTPUT_DIR_ENV: str(tmp_path / "envout")})
        proc = subprocess.run(
            [sys.executable, "-m", "outburst.cli", "replay-check", str(tmp_path / "nothing")],
            capture_output=True,
            text=True,
            env=env,
        )
        assert proc.returncode == 1  # nothing to check is a usage error

    def test_selftest_fault_injection_negative_control(self):
        # the corrupted grid must make the completeness check fail
        from outburst.selftest import check_grid_completeness

        ok, _ = check_grid_completeness(inject_fault=False)
        assert ok
        ok, detail = check_grid_completeness(inject_fault=True)
        assert not ok, detail
