from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from lastpass.cli import RunManifest, parse_boundary_spec, parse_grid, read_boundary_config, run


@pytest.fixture(autouse=True)
def _cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


BM_DRIFT = ["--family", "bm", "--mu", "1", "--boundary", "const:a=0", "--x", "0"]


def test_parsers():
    assert parse_boundary_spec("line_down:a=1,b=2") == {"shape": "line_down", "a": "1", "b": "2"}
    g = parse_grid("0.5:2:4:lin")
    assert g["lo"] == 0.5 and g["hi"] == 2.0 and g["n"] == 4


def test_density_output():
    assert run(["density", *BM_DRIFT, "--grid", "0.5:1.5:3:lin", "--out", "d.csv"]) == 0
    r = rows("d.csv")
    assert r[0] == ["t", "density"]
    t, v = map(float, r[2])
    assert t == 1.0 and v == pytest.approx(0.24197072451914337, rel=1e-10)
    man = json.load(open("d.csv.manifest.json"))
    assert man["command"] == "density" and "csv_sha256" in man["outputs"]


def test_cdf_and_atom():
    assert run(["cdf", *BM_DRIFT, "--grid", "1:2:2:lin", "--out", "c.csv"]) == 0
    assert float(rows("c.csv")[1][1]) == pytest.approx(0.6826894921370859, abs=1e-8)
    assert run(["atom", "--family", "bm", "--mu", "1", "--boundary", "const:a=0", "--x", "1", "--out", "a.json"]) == 0


def test_config_file_boundary(tmp_path):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("# constant level\nshape=const\na=0\n")
    assert read_boundary_config(cfg)["shape"] == "const"
    assert run(["density", "--family", "bm", "--mu", "1", "--boundary-config", str(cfg), "--x", "0",
                "--grid", "1:1:1", "--out", "d.csv"]) == 0
    assert float(rows("d.csv")[1][1]) == pytest.approx(0.24197072451914337, rel=1e-10)


def test_implicit_boundary_residuals():
    assert run(["boundary", "--family", "bessel", "--nu", "0.5", "--boundary", "resolvent:a=1,b=1",
                "--grid", "0.1:2:5", "--out", "b.csv"]) == 0
    man = json.load(open("b.csv.manifest.json"))
    assert man["residual_summary"]["max_abs_residual"] < 1e-9


def test_usage_errors_exit_2(capsys):
    assert run(["density", "--family", "bm", "--mu", "1", "--boundary", "zigzag:a=1", "--x", "0",
                "--grid", "1:2:2"]) == 2
    assert run(["density", "--family", "bm", "--mu", "1", "--boundary", "line_down:a=1", "--x", "0",
                "--grid", "1:2:2"]) == 2
    with pytest.raises(SystemExit) as exc:
        run(["density", "--boundary", "const:a=0"])
    assert exc.value.code == 2
    assert "error" in capsys.readouterr().err


def test_numerical_failure_exit_1(capsys):
    # a constant level needs a diffusion transient to +inf
    assert run(["density", "--family", "bm", "--mu", "0", "--boundary", "const:a=0", "--x", "0",
                "--grid", "1:2:2"]) == 1
    assert "numerical failure in lastpass.survival_H" in capsys.readouterr().err


def test_simulate_replay_is_byte_identical(monkeypatch):
    args = ["simulate", *BM_DRIFT, "--n", "3000", "--seed", "4", "--horizon", "20", "--out", "s"]
    monkeypatch.setenv("LASTPASS_THREADS", "1")
    assert run(args) == 0
    first = open("s_samples.csv", "rb").read()
    rep = json.load(open("s_report.json"))
    assert rep["ks"] < 0.05
    monkeypatch.setenv("LASTPASS_THREADS", "4")
    assert run(["--replay", "s_manifest.json"]) == 0
    assert open("s_samples.csv", "rb").read() == first
    man = RunManifest.from_json(open("s_manifest.json").read())
    assert man.seed == 4 and man.outputs["samples"] == "s_samples.csv"


def test_moments_output():
    assert run(["moments", "--family", "bm", "--mu", "1", "--boundary", "sqrt_root:a=0,b=0",
                "--lam", "1;1.5", "--out", "m.json"]) == 0
    rows_ = json.load(open("m.json"))
    assert rows_[0]["corrected"] == pytest.approx(1.0, rel=1e-10)


def test_verify_console_script():
    p = subprocess.run([sys.executable, "-m", "lastpass", "verify", "--suite", "specfun", "--out", "v.json"],
                       capture_output=True, text=True)
    assert p.returncode == 0
    assert p.stdout.startswith("PASS")
    assert json.load(open("v.json"))["passed"] is True
