import json
import subprocess
import sys
from pathlib import Path

import pytest

from steplab import cli


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "steplab.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


class TestValidate:
    def test_default_config_is_valid(self, tmp_path):
        r = run_cli(["validate"], tmp_path)
        assert r.returncode == 0

    def test_malformed_json_reports_and_fails(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        r = run_cli(["validate", "--config", str(bad)], tmp_path)
        assert r.returncode == 2
        assert "config error" in r.stderr

    def test_schema_violation_names_field(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"schema": 1, "lip": {"g": 9.81, "z0": -1.0, "T": 0.4}}))
        r = run_cli(["validate", "--config", str(cfg)], tmp_path)
        assert r.returncode == 2
        assert "lip.z0" in r.stderr

    def test_missing_model_file_reported(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"schema": 1, "walk": {"model": "nope.json"}}))
        r = run_cli(["validate", "--config", str(cfg)], tmp_path)
        assert r.returncode == 2
        assert "walk.model" in r.stderr


class TestOrbit:
    def test_emits_parameters_and_traces(self, tmp_path):
        r = run_cli(["orbit", "--out", "o", "--set", "orbit.v_x=[0.3]"], tmp_path)
        assert r.returncode == 0
        params = (tmp_path / "o" / "orbit_params.csv").read_text()
        assert "sigma1,5.6375066017107" in params
        assert "u_star_vx_0.3,0.12" in params
        assert "K1," in params and "K2,0.3760263813277" in params
        traces = (tmp_path / "o" / "orbit_traces.csv").read_text()
        assert traces.splitlines()[0] == "orbit,v_cmd,sample,t,p,v"
        assert any(line.startswith("P2L,") for line in traces.splitlines())

    def test_zero_velocity_degenerate_orbit(self, tmp_path):
        r = run_cli(["orbit", "--out", "o", "--set", "orbit.v_x=[0.0]", "--set", "orbit.uL_star=0.0"], tmp_path)
        assert r.returncode == 0
        for line in (tmp_path / "o" / "orbit_traces.csv").read_text().splitlines()[1:]:
            _, _, _, _, p, v = line.split(",")
            assert float(p) == 0.0 and float(v) == 0.0


class TestS2s:
    def test_velocity_assertion_pass(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "schema": 1,
            "s2s": {"vx_segments": [[0.0, 10], [0.15, 10]]},
            "assertions": {"velocity_tracking_rel_err": 0.01},
        }))
        r = run_cli(["s2s", "--config", str(cfg), "--out", "s"], tmp_path)
        assert r.returncode == 0
        assert (tmp_path / "s" / "s2s_steps.csv").exists()
        assert "segment v_x=0.15" in (tmp_path / "s" / "s2s_summary.txt").read_text()

    def test_failed_assertion_nonzero_exit(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "schema": 1,
            "s2s": {"vx_segments": [[0.1, 20]], "mismatch_y": {"mode": "impact-loss", "kappa": 0.135}},
            "assertions": {"adaptation_ratio_max": 0.0},
            "adaptation": {"enabled": True, "hidden": 16, "seed": 1},
        }))
        r = run_cli(["s2s", "--config", str(cfg), "--out", "s"], tmp_path)
        assert r.returncode == 1
        assert "ASSERTION FAILED" in r.stderr

    def test_no_adapt_flag_zeroes_adaptive_column(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "schema": 1,
            "s2s": {"vx_segments": [[0.1, 15]], "mismatch_y": {"mode": "impact-loss", "kappa": 0.1}},
            "adaptation": {"enabled": True, "hidden": 16, "seed": 1},
        }))
        r = run_cli(["s2s", "--config", str(cfg), "--out", "s", "--no-adapt"], tmp_path)
        assert r.returncode == 0
        rows = (tmp_path / "s" / "s2s_steps.csv").read_text().splitlines()
        idx = rows[1].split(",").index("u_y_adaptive")
        assert all(float(row.split(",")[idx]) == 0.0 for row in rows[2:])

    def test_byte_reproducible_outputs(self, tmp_path):
        args = ["s2s", "--out", None, "--seed", "11",
                "--set", "s2s.vx_segments=[[0.1,20]]",
                "--set", "s2s.noise_std=[0.001,0.001]"]
        outs = []
        for name in ("a", "b"):
            args[2] = name
            r = run_cli([str(a) for a in args], tmp_path)
            assert r.returncode == 0
            outs.append((tmp_path / name / "s2s_steps.csv").read_bytes()
                        + (tmp_path / name / "s2s_summary.txt").read_bytes())
        assert outs[0] == outs[1]

    def test_set_override_changes_behavior(self, tmp_path):
        r = run_cli(["s2s", "--out", "s", "--set", "s2s.vx_segments=[[0.25,7]]"], tmp_path)
        assert r.returncode == 0
        rows = (tmp_path / "s" / "s2s_steps.csv").read_text().splitlines()
        assert len(rows) == 2 + 7


class TestWalkCommand:
    def test_smoke_and_summary(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "schema": 1,
            "walk": {"n_steps": 2},
            "assertions": {"com_height_band": 0.005, "touchdown_max": 0.002},
        }))
        r = run_cli(["walk", "--config", str(cfg), "--out", "w"], tmp_path)
        assert r.returncode == 0, r.stderr
        assert (tmp_path / "w" / "walk_steps.csv").exists()
        assert (tmp_path / "w" / "walk_ticks.csv").exists()
        summary = (tmp_path / "w" / "walk_summary.txt").read_text()
        assert "period2_preimpact_config_diff" in summary
        assert "com_height_band" in summary
        assert "latency" in r.stdout          # console only, not in files
        assert "latency" not in summary


class TestEntryPoint:
    def test_in_process_main(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert cli.main(["validate"]) == 0
        assert cli.main(["validate", "--set", "lip.T=0"]) == 2
