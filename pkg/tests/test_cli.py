import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from ipognac import harness
from ipognac.cli import main

S = 1 / np.sqrt(2)


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_states_pattern(capsys):
    code, out, _ = run(["simulate-states", "--override", "pattern=L,R,D"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["label"] for r in rows] == ["L", "R", "D"]
    expected = {"L": (S, 0, 0, S), "R": (S, 0, 0, -S), "D": (S, 0, S, 0)}
    for r in rows:
        got = tuple(float(r[k]) for k in ("re_h", "im_h", "re_v", "im_v"))
        assert got == pytest.approx(expected[r["label"]], abs=1e-9)
        assert float(r["fidelity_to_target"]) == pytest.approx(1, abs=1e-12)
        assert float(r["dop"]) > 0.998


def test_run_qkd_seed_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["run-qkd", "--seed", "7", "--out", str(a)], capsys)[0] == 0
    assert run(["run-qkd", "--seed", "7", "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.summary.txt").read_text().startswith("basis=K\n")
    samples = harness.read_csv(open(a))
    assert len(samples) == 60


def test_run_qkd_stdout(capsys):
    code, out, err = run(["run-qkd", "--seed", "7", "--override", "run.duration_s=300"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "bin_start_s,sifted,errors,qber,qber_std"
    assert len(out.splitlines()) == 6
    assert "seed=7" in err


def test_run_qkd_plot(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert run(["run-qkd", "--out", str(out), "--plot", "--override", "run.duration_s=600"], capsys)[0] == 0
    assert (tmp_path / "r.png").read_bytes()[:4] == b"\x89PNG"


def test_sweep_dark_counts(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = run(["sweep", "--override", "sweep.key=snspd.dark_hz", "--override", "sweep.values=0,100,1000",
                      "--override", "run.duration_s=1800", "--out", str(out), "--plot"], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    means = [float(r["mean_qber"]) for r in rows]
    assert [r["snspd.dark_hz"] for r in rows] == ["0", "100", "1000"]
    assert means == sorted(means)
    assert (tmp_path / "s.png").exists()


def test_sweep_shorthand_flags(capsys):
    code, out, _ = run(["sweep", "--key", "snspd.dark_hz", "--values", "0:1000:2",
                        "--override", "run.duration_s=600"], capsys)
    assert code == 0
    assert [line.split(",")[0] for line in out.splitlines()[1:]] == ["0", "1000"]


def test_compare(tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    assert run(["compare", "--override", "run.duration_s=600", "--out", str(out), "--plot"], capsys)[0] == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["encoder"] for r in rows] == ["ipognac", "pognac-uncalibrated", "pognac-calibrated", "inline"]
    assert (tmp_path / "cmp.png").exists()


@pytest.mark.parametrize("args", [
    ["run-qkd", "--override", "run.bin_s=0"],
    ["run-qkd", "--override", "nope=1"],
    ["run-qkd", "--override", "novalue"],
    ["run-qkd", "--config", "/nonexistent/file.cfg"],
    ["run-qkd", "--plot"],
    ["simulate-states", "--override", "loop.delta_l_m=0.01"],
    ["sweep"],
])
def test_config_and_validation_errors(args, capsys):
    code, _, err = run(args, capsys)
    assert code == 1
    assert err.startswith("ipognac: error:")


@pytest.mark.parametrize("args", [["bogus"], ["run-qkd", "--frobnicate"], [], ["run-qkd", "--seed", "-1"]])
def test_usage_errors(args, capsys):
    code, _, err = run(args, capsys)
    assert code == 2
    assert "usage:" in err


def test_console_entry_point():
    p = subprocess.run([sys.executable, "-m", "ipognac.cli", "simulate-states"], capture_output=True, text=True)
    assert p.returncode == 0 and p.stdout.startswith("label,")
