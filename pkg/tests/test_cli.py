import csv
import json
import subprocess
import sys

import pytest

from cli_cases import CASES, invoke
from mvlancaster.cli import run


@pytest.mark.parametrize("command", sorted(CASES))
def test_subcommand_passes_and_is_deterministic(tmp_path, command, capsys):
    doc, flags = CASES[command]
    code, out_a = invoke(tmp_path, command, doc, flags, "a")
    printed = capsys.readouterr().out
    if command in ("poisson-array", "limits"):
        # short schedules and the degenerate array report residuals; pass/fail is covered elsewhere
        assert code in (0, 1)
    else:
        assert code == 0, printed
    assert "check" in printed and "tolerance" in printed
    code_b, out_b = invoke(tmp_path, command, doc, flags, "b")
    assert code_b == code
    files_a = sorted(p.name for p in out_a.iterdir())
    assert files_a == sorted(p.name for p in out_b.iterdir())
    assert "report.json" in files_a and "checks.csv" in files_a
    for name in files_a:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_report_contents(tmp_path):
    code, out = invoke(tmp_path, "orthogonality", {}, ["--family", "charlier", "--d", "2", "--mu", "1,1", "--degree", "4"])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True and report["subcommand"] == "orthogonality"
    with open(out / "orthogonality.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert max(float(r["residual"]) for r in rows) < 1e-8


def test_failing_check_gives_exit_one(tmp_path, capsys):
    doc = {"p": [0.5, 0.5], "theta": 1.0, "measure": {"atoms": [{"xi": [0.5, 0.0], "w": 1.0}]}}
    code, out = invoke(tmp_path, "feasibility", doc, [])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out
    assert json.loads((out / "report.json").read_text())["passed"] is False


def test_hypergroup_reports_minimum(tmp_path, capsys):
    code, out = invoke(tmp_path, "hypergroup", {"p": [1 / 3, 1 / 3, 1 / 3]}, [])
    assert code == 1
    report = json.loads((out / "report.json").read_text())
    assert report["data"]["feasible"] is False
    assert report["data"]["min_entry"] < 0


def test_unknown_subcommand(capsys):
    assert run(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_bad_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1,\n  "p": [0.5, 0.5,]\n}')
    assert run(["basis", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err


def test_missing_schema_and_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"p": [0.5, 0.5]}))
    assert run(["basis", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "schema" in capsys.readouterr().err
    cfg.write_text(json.dumps({"schema": 1, "N": 2}))
    assert run(["contingency", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "cells" in capsys.readouterr().err


def test_bad_seed(tmp_path):
    assert run(["simulate", "--seed", "-3", "--out", str(tmp_path / "o")]) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "mvlancaster", "basis", "--p", "0.25,0.75", "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert "PASS" in res.stdout
