import json
import subprocess
import sys

import numpy as np
import pytest

from pqlab.cli import EXIT_BUDGET, EXIT_OK, EXIT_USAGE, RunConfig, main


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "pqlab.cli", *args],
                          capture_output=True, text=True)


def test_print_config():
    out = subprocess.run(
        [sys.executable, "-m", "pqlab.cli", "eigs", "--r", "2.5",
         "--print-config"], capture_output=True, text=True)
    assert out.returncode == EXIT_OK
    cfg = json.loads(out.stdout)
    assert cfg["r"] == 2.5
    assert cfg["command"] == "eigs"
    assert "tolerances" in cfg and "budgets" in cfg


def test_config_hash_ignores_output_path():
    a = RunConfig(command="eigs", out="x")
    b = RunConfig(command="eigs", out="y")
    c = RunConfig(command="eigs", out="x", n=77)
    assert a.hash() == b.hash()
    assert a.hash() != c.hash()


def test_eigs_outputs(tmp_path):
    code = main(["eigs", "--r", "1.5", "--kmax", "2", "--n", "128",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    table = (tmp_path / "table.csv").read_text().splitlines()
    assert table[0].startswith("# config_hash=")
    assert any(ln.startswith("# versions=") for ln in table[:4])
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["values"]["lambda_1"] == pytest.approx(5.3187, rel=1e-3)
    assert summary["values"]["lambda_2"] == pytest.approx(15.0436, rel=1e-3)
    assert summary["meta"]["versions"]["numpy"] == np.__version__


def test_curve_sentinel_point(tmp_path):
    code = main(["curve", "--p", "2", "--q", "1.5", "--alpha", "5.0",
                 "--n", "64", "--out", str(tmp_path)])
    assert code == EXIT_OK
    body = [ln for ln in (tmp_path / "curve.csv").read_text().splitlines()
            if not ln.startswith("#")]
    assert body[1].split(",")[1] == "+inf"
    assert "sentinel" in body[1]


def test_classify_verdict_file(tmp_path):
    code = main(["classify", "--p", "3", "--q", "1.5", "--alpha", "0",
                 "--beta", "8", "--n", "96", "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "verdict.json").read_text())
    assert doc["verdict"]["k"] == 1
    assert doc["meta"]["config_hash"]


def test_solve_empty_by_theorem(tmp_path):
    code = main(["solve", "--p", "3", "--q", "1.5", "--alpha", "10",
                 "--beta", "3", "--n", "96", "--out", str(tmp_path)])
    assert code == EXIT_OK
    body = [ln for ln in
            (tmp_path / "registry_negative.csv").read_text().splitlines()
            if not ln.startswith("#")]
    assert len(body) == 1  # header only


def test_solve_budget_exit(tmp_path):
    out = run_cli("solve", "--p", "3", "--q", "1.5", "--alpha", "10",
                  "--beta", "3", "--n", "96", "--k", "1", "--starts", "4",
                  "--out", str(tmp_path))
    assert out.returncode == EXIT_BUDGET
    assert "negative search" in out.stderr


def test_solve_finds_pair(tmp_path):
    code = main(["solve", "--p", "3", "--q", "1.5", "--alpha", "0",
                 "--beta", "8", "--n", "96", "--starts", "8",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    body = [ln for ln in
            (tmp_path / "registry_negative.csv").read_text().splitlines()
            if not ln.startswith("#")]
    assert len(body) == 2
    assert float(body[1].split(",")[1]) < 0
    assert (tmp_path / "solutions_negative" / "solution_0.csv").exists()
    levels = json.loads((tmp_path / "levels.json").read_text())
    assert levels["levels"]["negative_bounds"][0] < 0


def test_usage_errors():
    assert run_cli("solve", "--p", "1.5", "--q", "3").returncode == EXIT_USAGE
    assert run_cli("nonsense").returncode == EXIT_USAGE
    assert run_cli("eigs", "--domain", "annulus:3").returncode == EXIT_USAGE
    assert run_cli("beads", "--resolution", "48", "24", "--eps",
                   "0.05").returncode == EXIT_USAGE


def test_check_subcommand(tmp_path):
    code = main(["check", "--p", "3", "--q", "1.5", "--alpha", "0",
                 "--beta", "8", "--n", "96", "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "check.json").read_text())
    assert doc["failures"] == []
    assert doc["gradient_worst_rel"] < 1e-6


def test_reruns_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["classify", "--p", "3", "--q", "1.5", "--beta", "8",
                     "--n", "96", "--out", str(d)]) == EXIT_OK
    assert (a / "verdict.json").read_bytes() == (b / "verdict.json").read_bytes()


def test_config_file_merge(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"p": 3.0, "q": 1.5, "beta": 8.0, "n": 96}))
    out_a = tmp_path / "a"
    code = main(["classify", "--config", str(cfg), "--out", str(out_a)])
    assert code == EXIT_OK
    doc = json.loads((out_a / "verdict.json").read_text())
    assert doc["verdict"]["k"] == 1
    # explicit flag beats the file
    out_b = tmp_path / "b"
    code = main(["classify", "--config", str(cfg), "--beta", "3.0",
                 "--out", str(out_b)])
    doc = json.loads((out_b / "verdict.json").read_text())
    assert doc["verdict"]["k"] == 0
