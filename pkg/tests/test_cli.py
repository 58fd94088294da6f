import json
import subprocess
import sys

import pytest

from gridpact.cli import main
from gridpact.data_io import load_scenario, read_results, save_scenario

from conftest import toy


@pytest.fixture
def infeasible_doc(tmp_path):
    sc = toy(S=(2.0, 0.0, 2.0), alpha_min=0.9, theta=1.0, cm_budget=40.0)
    path = tmp_path / "dead.json"
    save_scenario(sc, str(path), str(tmp_path / "dead.csv"))
    return str(path)


def test_solve_writes_one_row(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["solve", "--case", "game1", "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("game1: ")
    rows = read_results(str(out))
    assert len(rows) == 1 and rows[0]["case"] == "game1"
    assert len(out.read_text().splitlines()) == 2


def test_solve_json_and_highs(tmp_path):
    out = tmp_path / "r.json"
    assert main(["solve", "--case", "no-hpr", "--backend", "highs", "--format", "json",
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())[0]["case"] == "no-hpr"


def test_infeasible_exit_code_lists_tags(infeasible_doc, capsys):
    assert main(["solve", "--case", "game2", "--scenario", infeasible_doc]) == 2
    err = capsys.readouterr().err
    assert "violated: cm_budget[0]" in err


def test_usage_errors(capsys):
    assert main(["sweep", "--axis", "crcplus", "--from", "1", "--to", "5", "--step", "0"]) == 1
    assert main(["sweep", "--axis", "crcplus"]) == 1
    assert main(["sweep", "--axis", "tariff", "--values", "1"]) == 1
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["solve", "--case", "game1", "--gap", "0.9"])
    assert info.value.code == 1
    assert main(["validate", "--scenario", "/nonexistent.json"]) == 1


def test_invalid_scenario_lists_errors(tmp_path, capsys):
    doc = tmp_path / "bad.json"
    save_scenario(toy(), str(doc), str(tmp_path / "bad.csv"))
    data = json.loads(doc.read_text())
    data["budgets"]["theta"] = 3.0
    data["tech"]["alpha_min"] = 2.0
    doc.write_text(json.dumps(data))
    assert main(["validate", "--scenario", str(doc)]) == 1
    err = capsys.readouterr().err
    assert "theta" in err and "alpha_min" in err


def test_sweep_five_points(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code = main(["sweep", "--axis", "crcplus", "--from", "1", "--to", "5", "--step", "1",
                 "--cases", "ely-hpr", "--jobs", "1", "--out", str(out)])
    assert code == 0
    assert len(read_results(str(out))) == 5
    assert "5 of 5 points solved" in capsys.readouterr().out


def test_sweep_gnuplot(tmp_path):
    out = tmp_path / "s.dat"
    assert main(["sweep", "--axis", "h2", "--values", "5,10", "--cases", "no-hpr,ely-hpr",
                 "--jobs", "1", "--gnuplot", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_oracle_check_refinement(capsys, tmp_path):
    report = tmp_path / "grid.csv"
    code = main(["oracle-check", "--case", "game1", "--grid-step", "1,0.5,0.25",
                 "--ceiling", "2", "--report", str(report)])
    out = capsys.readouterr().out
    assert code == 0, out
    gaps = [float(line.split("abs gap ")[1].split()[0]) for line in out.splitlines()
            if line.startswith("step")]
    assert len(gaps) == 3 and all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
    assert "MISMATCH" not in out and "grew" not in out
    assert report.exists()


def test_oracle_guard_exits_1(capsys):
    assert main(["oracle-check", "--grid-step", "0.01", "--ceiling", "2",
                 "--max-points", "100"]) == 1
    assert "guard" in capsys.readouterr().err


def test_oracle_ceiling_below_peak(capsys):
    assert main(["oracle-check", "--ceiling", "0.5"]) == 1


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"gap": 0.01, "backend": "highs"}))
    out = tmp_path / "r.csv"
    assert main(["solve", "--case", "ely-hpr", "--config", str(cfg), "--out", str(out)]) == 0
    cfg.write_text(json.dumps({"colour": "red"}))
    with pytest.raises(SystemExit) as info:
        main(["solve", "--case", "ely-hpr", "--config", str(cfg)])
    assert info.value.code == 1


def test_gen_data(tmp_path):
    out = tmp_path / "syn.json"
    assert main(["gen-data", "--hours", "48", "--seed", "7", "--out", str(out)]) == 0
    sc = load_scenario(str(out))
    assert sc.hours == 48 and max(sc.network.residual_capacity) == 63.0
    assert (tmp_path / "syn_series.csv").exists()
    assert main(["gen-data", "--hours", "48"]) == 1


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "gridpact.cli", "solve", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "exit codes" in res.stdout
