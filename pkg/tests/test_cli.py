import csv
import json
import subprocess
import sys

import pytest

from lse import interaction
from lse.cli import dumps, main


def run_cli(*argv):
    return subprocess.run([sys.executable, "-m", "lse.cli", *argv], capture_output=True, text=True)


def test_run_fixture_to_stdout(capsys):
    assert main(["run", "--fixture", "crossing_2x2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "certified" and out["b_star"] == 0
    assert out["config"]["eps2"] == pytest.approx(0.1 * 0.05)


def test_run_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        res = run_cli("run", "--smoothed", "3", "3", "0.05", "--seed", "4", "--out", str(out),
                      "--transcript")
        assert res.returncode == 0, res.stderr
    assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()
    assert (a / "transcript.jsonl").read_bytes() == (b / "transcript.jsonl").read_bytes()


def test_env_seed_overrides_flag(tmp_path, monkeypatch):
    monkeypatch.setenv("LSE_SEED", "4")
    assert main(["gen", "--smoothed", "3", "3", "0.05", "--seed", "9",
                 "--out", str(tmp_path / "env.json")]) == 0
    monkeypatch.delenv("LSE_SEED")
    assert main(["gen", "--smoothed", "3", "3", "0.05", "--seed", "4",
                 "--out", str(tmp_path / "flag.json")]) == 0
    assert (tmp_path / "env.json").read_text() == (tmp_path / "flag.json").read_text()


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["run"]) == 2
    assert main(["run", "--fixture", "nope"]) == 2
    assert main(["run", "--fixture", "dominant", "--alpha", "5"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{\"u1\": 1}")
    assert main(["verify", "--file", str(bad), "--enumerate"]) == 2
    assert main(["verify", "--fixture", "dominant"]) == 2
    assert "error" in capsys.readouterr().err


def test_require_certified_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(interaction, "ROUND_CAP", 200)
    code = main(["run", "--smoothed", "3", "3", "0.05", "--seed", "5", "--require-certified"])
    assert code == 1
    assert json.loads(capsys.readouterr().out)["status"] == "budget_exhausted"


def test_verify_certify_lower_bound_vertices(capsys):
    assert main(["verify", "--lowerbound", "2", "--principal", "4", "--certify", "vertex:v_ell",
                 "--eps", "0.05", "--delta", "0.05"]) == 0
    assert json.loads(capsys.readouterr().out)["certify"]["certified"]
    assert main(["verify", "--lowerbound", "2", "--principal", "4", "--certify", "vertex:0",
                 "--eps", "0.05", "--delta", "0.05"]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert "witness" in rep["certify"]


def test_verify_enumerate_stackelberg_singular(capsys):
    assert main(["verify", "--fixture", "crossing_2x2", "--enumerate", "--stackelberg",
                 "--singular"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["stackelberg"]["value"] == pytest.approx(4 / 7)
    assert [p["nonempty"] for p in rep["polytopes"]] == [True, True]
    assert rep["singular"]["exhaustive"]


def test_sweep_writes_rows_and_cells(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--m", "3", "--seeds", "2", "--eps", "0.1,0.2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4 and rows[0].keys() >= {"rounds_total", "certified", "u1_exact_opt"}
    cells = list(csv.DictReader((tmp_path / "s_cells.csv").open()))
    assert len(cells) == 2 and cells[0]["runs"] == "2"


def test_dumps_is_stable():
    text = dumps({"a": [0.1, 1], "b": {"c": True, "d": float("inf")}})
    assert json.loads(text) == {"a": [0.1, 1], "b": {"c": True, "d": "inf"}}
    assert dumps(1 / 3) == "0.33333333333333331"


def test_sweep_game_seed_fixes_the_game(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["sweep", "--m", "3", "--seeds", "3", "--game-seed", "4", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["seed"] for r in rows] == ["0", "1", "2"]
    assert len({r["u1_exact_opt"] for r in rows}) == 1
