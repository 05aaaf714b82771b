import json
import subprocess
import sys
from pathlib import Path

import pytest

from resolvent_lab.cli import ConfigError, load_config, main, run


def write_config(tmp_path, cfg):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_outputs(outdir):
    out = {}
    for sub in ("data", "reports"):
        for f in sorted((Path(outdir) / sub).glob("*")):
            out[f"{sub}/{f.name}"] = f.read_bytes()
    return out


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, {"task": "simulate", "bogus": 1})
        with pytest.raises(ConfigError, match="bogus"):
            load_config(path)

    def test_nested_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, {"task": "simulate", "model": {"zeta": 2}})
        with pytest.raises(ConfigError, match="model.zeta"):
            load_config(path)

    def test_json_error_line_anchored(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n "task": simulate\n}')
        with pytest.raises(ConfigError, match=r":2:"):
            load_config(str(path))

    def test_set_overrides_dotted_path(self, tmp_path):
        path = write_config(tmp_path, {"task": "simulate", "model": {"lambda": 0.5}})
        cfg = load_config(path, overrides=["model.lambda=0.25"])
        assert cfg["model"]["lambda"] == 0.25

    def test_missing_sweep_lambdas_fails(self, tmp_path):
        path = write_config(tmp_path, {"task": "sweep", "sweep": {}})
        code = run(path, outdir=str(tmp_path / "out"))
        assert code == 1

    def test_invalid_config_exit_code(self, tmp_path):
        path = write_config(tmp_path, {"task": "nonsense"})
        assert run(path, outdir=str(tmp_path / "out")) == 1


class TestTasks:
    def test_simulate_writes_trajectory(self, tmp_path):
        path = write_config(tmp_path, {
            "task": "simulate", "model": {"lambda": 0.25, "potential": "zero"},
            "simulate": {"p0": 2.0, "horizon": 5.0}, "seed": 4})
        out = tmp_path / "out"
        assert run(path, outdir=str(out)) == 0
        lines = (out / "data" / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "time,kind,x,p,H"
        assert len(lines) > 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 4

    def test_estimate_zero_payoff_mean_zero(self, tmp_path):
        path = write_config(tmp_path, {
            "task": "estimate", "model": {"lambda": 0.25, "potential": "zero"},
            "estimate": {"p0": 2.0, "n_paths": 256, "payoff_kind": "zero"}})
        out = tmp_path / "out"
        assert run(path, outdir=str(out)) == 0
        rows = (out / "data" / "estimates.csv").read_text().splitlines()
        assert rows[1].split(",")[2] == "0"

    def test_solve_writes_nodes_and_report(self, tmp_path):
        path = write_config(tmp_path, {
            "task": "solve", "model": {"lambda": 0.25, "potential": "zero"}})
        out = tmp_path / "out"
        assert run(path, outdir=str(out)) == 0
        assert (out / "data" / "resolvent_nodes.csv").exists()
        rep = json.loads((out / "reports" / "solve_residual.json").read_text())
        assert rep["tail_mass"] < 1e-8

    def test_verify_smoke_passes(self, tmp_path):
        path = write_config(tmp_path, {
            "task": "verify", "model": {"lambda": 0.25, "potential": "zero"},
            "verify": {"checks": ["drift_full", "drift_skeleton"],
                       "lambdas": [0.5, 0.25]}})
        out = tmp_path / "out"
        assert run(path, outdir=str(out)) == 0
        assert (out / "reports" / "drift_full.json").exists()

    def test_sweep_writes_c_hat_table(self, tmp_path):
        path = write_config(tmp_path, {
            "task": "sweep", "model": {"lambda": 0.25, "potential": "zero"},
            "sweep": {"checks": ["main_bound"], "lambdas": [0.5, 0.25]}})
        out = tmp_path / "out"
        assert run(path, outdir=str(out)) == 0
        lines = (out / "data" / "c_hat_table.csv").read_text().splitlines()
        assert lines[0] == "inequality_id,lambda,c_hat,ratio,pass"
        # 4 kernel combos x 2 lambdas
        assert len(lines) == 1 + 8


class TestDeterminism:
    def test_identical_runs_byte_identical(self, tmp_path):
        cfg = {"task": "verify", "model": {"lambda": 0.25, "potential": "zero"},
               "verify": {"checks": ["drift_full"], "lambdas": [0.5, 0.25]},
               "seed": 9}
        path = write_config(tmp_path, cfg)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert run(path, outdir=str(out1)) == 0
        assert run(path, outdir=str(out2)) == 0
        assert read_outputs(out1) == read_outputs(out2)

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        cfg = {"task": "estimate", "model": {"lambda": 0.25, "potential": "zero"},
               "estimate": {"p0": 2.0, "n_paths": 2048}, "seed": 5}
        path = write_config(tmp_path, cfg)
        out1, out2 = tmp_path / "w1", tmp_path / "w2"
        assert run(path, outdir=str(out1), workers=1) == 0
        assert run(path, outdir=str(out2), workers=2) == 0
        assert read_outputs(out1) == read_outputs(out2)


class TestEntryPoint:
    def test_main_help(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_main_runs_config(self, tmp_path):
        path = write_config(tmp_path, {
            "task": "estimate", "model": {"lambda": 0.25, "potential": "zero"},
            "estimate": {"p0": 2.0, "n_paths": 128}})
        assert main(["--config", path, "--outdir", str(tmp_path / "out"),
                     "--set", "seed=3"]) == 0
