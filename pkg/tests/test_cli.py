import csv
import json
import subprocess
import sys

import pytest

from adjoint_ts.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_taylor_aircraft_json(capsys):
    code, out, _ = run(capsys, "taylor", "--json")
    rows = json.loads(out)
    assert code == 0
    assert [r["h"] for r in rows] == [5e-3, 5e-4, 5e-5]
    assert all(abs(r["order2"] - 2) < 0.1 for r in rows[1:])


def test_taylor_with_checkpointing(capsys):
    code, out, _ = run(capsys, "taylor", "--problem", "polynomial", "--method", "theta0.5", "--capacity", "2",
                       "--h", "1e-2", "1e-3", "1e-4")
    assert code == 0 and "Taylor remainder test" in out


def test_hvp_test_polynomial(capsys):
    code, out, _ = run(capsys, "hvp-test", "--problem", "polynomial", "--method", "theta1", "--seed", "3")
    assert code == 0 and "symmetry residual" in out


def test_revolve_reference_counts(capsys):
    code, out, _ = run(capsys, "revolve-stats", "--steps", "10", "--capacity", "3", "--json")
    rows = {r["mode"]: r["recomputations"] for r in json.loads(out)}
    assert code == 0 and rows == {"sol": 15, "sol+stages": 6}
    code, out, _ = run(capsys, "revolve-stats", "--steps", "10", "--capacity", "3", "--mode", "sol", "--json")
    assert [r["mode"] for r in json.loads(out)] == ["sol"]


def test_revolve_curves_csv(capsys, tmp_path):
    path = tmp_path / "curves.csv"
    code, _, _ = run(capsys, "revolve-stats", "--n-max", "20", "--units", "12", "--stages", "2", "4",
                     "--out", str(path))
    rows = list(csv.DictReader(open(path)))
    assert code == 0
    assert rows[0].keys() == {"N", "capacity", "mode", "recomputations"}
    assert len(rows) == 20 * 3


def test_validate_problems(capsys):
    for problem in ("aircraft", "linear-test", "polynomial"):
        code, out, _ = run(capsys, "validate", "--problem", problem)
        assert code == 0, out
    code, _, _ = run(capsys, "validate", "--problem", "grayscott", "--grid", "8")
    assert code == 0


def test_integrate_writes_trajectory(capsys, tmp_path):
    path = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "integrate", "--problem", "aircraft", "--method", "theta0.5", "--json",
                       "--out", str(path))
    info = json.loads(out)
    assert code == 0 and info["steps"] == 100 and info["method"] == "theta0.5"
    assert len(list(csv.reader(open(path)))) == 102


def test_grayscott_invert_small(capsys):
    code, out, _ = run(capsys, "grayscott-invert", "--grid", "8", "--method", "theta1", "--capacity", "3")
    assert code == 0, out
    assert "adjoint/forward time ratio" in out


def test_optimal_control_start_on_leader(capsys):
    code, out, _ = run(capsys, "optimal-control", "--start-on-leader", "--json")
    rows = json.loads(out)
    assert code == 0
    assert {r["optimizer"] for r in rows} == {"lbfgs", "newton"}
    assert all(r["iteration"] == 0 for r in rows)


def test_optimal_control_newton_history(capsys, tmp_path):
    path = tmp_path / "hist.csv"
    code, _, _ = run(capsys, "optimal-control", "--optimizer", "newton", "--intervals", "4",
                     "--steps-per-interval", "5", "--gtol", "1e-6", "--out", str(path))
    rows = list(csv.DictReader(open(path)))
    assert code == 0
    assert float(rows[-1]["gradnorm"]) <= 1e-6


def test_bad_arguments(capsys):
    code, _, err = run(capsys, "integrate", "--method", "magic")
    assert code == 1 and "unknown method" in err
    code, _, err = run(capsys, "taylor", "--capacity", "0")
    assert code == 1 and "capacity" in err
    with pytest.raises(SystemExit) as info:
        main(["revolve-stats", "--mode", "neither"])
    assert info.value.code == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "adjoint_ts.cli", "revolve-stats", "--steps", "10",
                           "--capacity", "3", "--json"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert {r["recomputations"] for r in json.loads(proc.stdout)} == {15, 6}
