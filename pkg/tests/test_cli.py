"""End-to-end command-line behavior: files, determinism, exit codes."""

import json
import subprocess
import sys

import pytest

from bsderisk.cli import main
from bsderisk.errors import SolverFailure
from bsderisk.reporting import read_report


@pytest.fixture()
def config_path(tmp_path):
    cfg = {
        "scenario_id": "cli-unit",
        "task": "risk",
        "grid": {"horizon": 1.0, "steps": 10},
        "mc": {"paths": 2000, "seed": 11},
        "model": {
            "x0": 0.0,
            "mu": 0.1,
            "sigma": 0.3,
            "jumps": [{"size": -0.2, "intensity": 1.5}],
        },
        "driver": {"family": "entropic", "gamma": 2.0},
        "payoff": {"family": "affine", "a": 0.0, "b": 1.0},
        "method": {"tolerances": {"closed_form": 0.05}},
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_risk_run_writes_payload_and_sidecar(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli("risk", "--config", config_path, "--out", out)
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == str(out / "cli-unit.csv")
    assert lines[1] == str(out / "cli-unit.provenance.json")
    assert lines[2].startswith("checks passed ")
    assert (out / "cli-unit.csv").exists()
    sidecar = json.loads((out / "cli-unit.provenance.json").read_text())
    assert sidecar["task"] == "risk"
    assert sidecar["seed"] == 11
    assert "wall_seconds" in sidecar


def test_payload_bytes_identical_across_reruns(config_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("risk", "--config", config_path, "--out", a) == 0
    assert run_cli("risk", "--config", config_path, "--out", b) == 0
    assert (a / "cli-unit.csv").read_bytes() == (b / "cli-unit.csv").read_bytes()
    # wall clock lives only in the sidecar
    sa = json.loads((a / "cli-unit.provenance.json").read_text())
    sb = json.loads((b / "cli-unit.provenance.json").read_text())
    sa.pop("wall_seconds"), sb.pop("wall_seconds")
    assert sa == sb


def test_set_override_reaches_provenance(config_path, tmp_path):
    out = tmp_path / "out"
    code = run_cli("risk", "--config", config_path, "--out", out,
                   "--set", "mc.paths=1500", "--set", "model.mu=0.2")
    # the smaller sample may fail the closed-form gap check; this test is
    # about override plumbing, so any completed run will do
    assert code in (0, 1)
    sidecar = json.loads((out / "cli-unit.provenance.json").read_text())
    assert sidecar["config"]["mc"]["paths"] == 1500
    assert sidecar["config"]["model"]["mu"] == 0.2


def test_seed_flag_replaces_config_seed(config_path, tmp_path):
    out = tmp_path / "out"
    assert run_cli("risk", "--config", config_path, "--out", out, "--seed", 123) == 0
    sidecar = json.loads((out / "cli-unit.provenance.json").read_text())
    assert sidecar["seed"] == 123
    assert sidecar["config"]["mc"]["seed"] == 123


def test_json_lines_format_round_trips(config_path, tmp_path):
    csv_dir, jl_dir = tmp_path / "c", tmp_path / "j"
    assert run_cli("risk", "--config", config_path, "--out", csv_dir) == 0
    assert run_cli("risk", "--config", config_path, "--out", jl_dir,
                   "--format", "json-lines") == 0
    from_csv = read_report(csv_dir / "cli-unit.csv")
    from_jl = read_report(jl_dir / "cli-unit.jsonl")
    assert from_csv.rows == from_jl.rows


def test_report_reemits_identical_payload(config_path, tmp_path):
    first, second = tmp_path / "f", tmp_path / "s"
    assert run_cli("risk", "--config", config_path, "--out", first) == 0
    assert run_cli("report", "--in", first / "cli-unit.csv", "--out", second) == 0
    assert (first / "cli-unit.csv").read_bytes() == (second / "cli-unit.csv").read_bytes()


def test_out_env_fallback(config_path, tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv("BSDERISK_OUT", str(target))
    assert run_cli("risk", "--config", config_path) == 0
    assert (target / "cli-unit.csv").exists()


def test_failing_check_exits_one(config_path, tmp_path, capsys):
    code = run_cli("risk", "--config", config_path, "--out", tmp_path / "o",
                   "--set", "method.tolerances.closed_form=1e-9")
    assert code == 1
    assert "checks passed" in capsys.readouterr().out


def test_parse_error_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    code = run_cli("risk", "--config", bad, "--out", tmp_path)
    assert code == 2
    assert capsys.readouterr().err.startswith("config-parse-error:")


def test_validation_error_exits_three(config_path, tmp_path, capsys):
    code = run_cli("risk", "--config", config_path, "--out", tmp_path,
                   "--set", "model.sigma=-1")
    assert code == 3
    assert capsys.readouterr().err.startswith("config-validation-error:")


def test_task_mismatch_exits_three(config_path, tmp_path, capsys):
    code = run_cli("solve", "--config", config_path, "--out", tmp_path)
    assert code == 3
    assert "subcommand" in capsys.readouterr().err


def test_solver_failure_exits_four(config_path, tmp_path, capsys, monkeypatch):
    import bsderisk.cli as cli_mod

    def boom(cfg, wall_seconds=None):
        raise SolverFailure("regression system is singular")

    monkeypatch.setattr(cli_mod, "run_scenario", boom)
    code = run_cli("risk", "--config", config_path, "--out", tmp_path)
    assert code == 4
    assert capsys.readouterr().err.startswith("solver-failure:")


def test_signed_density_exits_five(config_path, tmp_path, capsys):
    code = run_cli(
        "verify", "--config", config_path, "--out", tmp_path,
        "--set", "task=verify",
        "--set", 'verify={"checks": ["doleans"], "phi_jumps": [-1.2]}',
    )
    assert code == 5
    assert capsys.readouterr().err.startswith("estimator-failure/signed-density:")


def test_console_script_is_installed(config_path, tmp_path):
    out = tmp_path / "sub"
    proc = subprocess.run(
        [sys.executable, "-m", "bsderisk.cli", "risk",
         "--config", str(config_path), "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "cli-unit.csv").exists()
