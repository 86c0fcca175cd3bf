"""Command line: exit codes and the files each subcommand writes."""

import os
import simplejson as json
import pandas as pd
import pytest

from supinf.app.app import main, EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg"))
    monkeypatch.setenv("SUPINF_OUT", str(tmp_path / "default_out"))


def Run(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    return e.value.code


def WriteConfig(path, constraint, **problem):
    data = {"mesh": {"cells": 32},
            "problem": {"f": "gradient_norm", "constraint": constraint, **problem},
            "output": {"timing": False}}
    path.write_text(json.dumps(data))
    return str(path)


def test_oracle_subcommand(tmp_path, capsys):
    assert Run(["oracle", "--case", "trapezoid", "--out", str(tmp_path)]) == EXIT_OK
    assert '"slope": 4.0' in capsys.readouterr().out
    with open(tmp_path / "oracle_trapezoid.json") as f:
        assert json.load(f)["slope"] == pytest.approx(4.0)


def test_solve_then_check(tmp_path):
    config = WriteConfig(tmp_path / "p2.json", {"kind": "isoperimetric", "h": "component_0", "H": 1.0 / 12.0, "equality": True})
    out = tmp_path / "solve"
    assert Run(["--logLevel", "WARNING", "solve", "--config", config, "--p", "2", "--out", str(out)]) == EXIT_OK
    for name in ("state.csv", "u.field", "state.json", "config.json"):
        assert os.path.exists(out / name)
    table = pd.read_csv(out / "state.csv")
    assert list(table.columns) == ["p", "F_p", "G_p", "mu", "psi_norm", "kkt_res", "slack", "feasibility", "outer_iters", "wall_ms"]
    assert table["F_p"][0] == pytest.approx(1.0 / 12.0 ** 0.5, abs=1e-3)
    assert table["wall_ms"][0] == 0.0
    assert Run(["check", "--state", str(out)]) == EXIT_OK


def test_configuration_errors_exit_with_code_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"solvr": {"tol": 1e-3}}))
    assert Run(["solve", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    assert "unknown key 'solvr.tol'" in capsys.readouterr().out


def test_infeasible_problem_exits_with_code_3(tmp_path, capsys):
    config = WriteConfig(tmp_path / "cap.json", {"kind": "isoperimetric", "H": -0.75}, g="abs", G=0.5)
    assert Run(["sweep", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_INFEASIBLE
    assert "compatibility check failed" in capsys.readouterr().out


def test_several_configs_write_subdirectories(tmp_path):
    first = WriteConfig(tmp_path / "first.json", {"kind": "none"})
    second = WriteConfig(tmp_path / "second.json", {"kind": "isoperimetric", "H": -0.1}, g="abs", G=1.0)
    out = tmp_path / "many"
    assert Run(["solve", "--config", first, second, "--p", "4", "--out", str(out)]) == EXIT_OK
    assert os.path.exists(out / "first" / "state.json")
    assert os.path.exists(out / "second" / "state.json")


@pytest.mark.slow
def test_sweep_writes_trace(tmp_path):
    config = WriteConfig(tmp_path / "slack.json", {"kind": "isoperimetric", "H": -0.2}, g="abs", G=10.0)
    out = tmp_path / "sweep"
    assert Run(["sweep", "--config", config, "--out", str(out)]) == EXIT_OK
    trace = pd.read_csv(out / "trace.csv")
    assert len(trace) == 6
    assert (trace["M"] <= 1e-6).all()
    assert os.path.exists(out / "limit.json")
    assert os.path.exists(out / "step_5" / "u.field")
    assert Run(["check", "--state", str(out / "step_5")]) == EXIT_OK
