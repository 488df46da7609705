import json
import subprocess
import sys

import numpy as np
import pytest

from gwdual.cli import EXIT_INPUT, EXIT_NONCONVERGED, EXIT_OK, main
from gwdual.measures import DiscreteMeasure, save_measure


@pytest.fixture
def pair(tmp_path):
    rng = np.random.default_rng(0)
    a, b = tmp_path / "a.csv", tmp_path / "b.json"
    save_measure(DiscreteMeasure(rng.normal(size=(4, 2))), a)
    save_measure(DiscreteMeasure(rng.normal(size=(4, 1))), b)
    return str(a), str(b)


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_gw_report(capsys, pair):
    code, out = run(capsys, "gw", *pair)
    assert code == EXIT_OK
    rep = json.loads(out.out)
    oracle = json.loads(run(capsys, "oracle", *pair)[1].out)
    assert rep["total"] == pytest.approx(oracle["value"], abs=1e-9)
    assert rep["command"][:2] == ["gw-dual", "gw"]


def test_egw_writes_file(capsys, pair, tmp_path):
    out = tmp_path / "r.json"
    code, _ = run(capsys, "egw", *pair, "--epsilon", "0.5", "--out", str(out))
    assert code == EXIT_OK
    assert json.loads(out.read_text())["epsilon"] == 0.5


def test_non_convergence_exit_code(capsys, pair, monkeypatch):
    import gwdual.experiments as ex

    real = ex.solve_report

    def capped(*args, **kwargs):
        rep = real(*args, **kwargs)
        rep.converged = False
        return rep

    monkeypatch.setattr(ex, "solve_report", capped)
    code, out = run(capsys, "gw", *pair)
    assert code == EXIT_NONCONVERGED
    assert json.loads(out.out)["total"] >= 0  # best-so-far still emitted


@pytest.mark.parametrize(
    "argv",
    [
        ["gw", "missing.csv", "missing.csv"],
        ["egw", "a", "b"],
        ["one-dim", "--n", "7", "--xi", "0.6"],
        ["gen-dual", "--k", "0"],
        ["nonsense"],
    ],
)
def test_input_errors(capsys, argv):
    assert main(argv) == EXIT_INPUT


def test_bad_measure_file(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,w\n0,zz\n")
    code, out = run(capsys, "gw", str(bad), str(bad))
    assert code == EXIT_INPUT and "line 2" in out.err


def test_sweeps_emit_csv(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epsilon_grid": [1.0, 0.5], "n_grid": [4]}))
    code, out = run(capsys, "gap-sweep", "--config", str(cfg), "--seed", "3")
    assert code == EXIT_OK
    lines = out.out.splitlines()
    assert lines[0] == "# gw-dual v1" and "epsilon,egwValue,gap,ratio" in lines
    code, out = run(capsys, "plan-sweep", "--config", str(cfg))
    assert code == EXIT_OK and "epsilon,planDistance" in out.out


def test_scaling_identity_and_one_dim(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_grid": [3], "trials": 2}))
    code, out = run(capsys, "scaling-identity", "--config", str(cfg))
    assert code == EXIT_OK and out.out.count("true") == 2
    code, out = run(capsys, "one-dim", "--n", "7", "--xi", "0.06", "--grid", "129")
    assert code == EXIT_OK and "0.06,BOUNDARY" in out.out


def test_rate_sweep_small(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_grid": [8, 16], "trials": 2, "dims": [1, 1]}))
    code, out = run(capsys, "rate-sweep", "--mode", "two_sample", "--estimator", "gw", "--config", str(cfg))
    assert code == EXIT_OK and "slope=" in out.out and "slope=" in out.err


def test_procrustes_and_gen_dual(capsys, tmp_path):
    rng = np.random.default_rng(1)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_measure(DiscreteMeasure(rng.normal(size=(4, 2))), a)
    save_measure(DiscreteMeasure(rng.normal(size=(4, 2))), b)
    code, out = run(capsys, "procrustes", str(a), str(b), "--lemma")
    doc = json.loads(out.out)
    assert code == EXIT_OK and doc["certified"] and doc["lemma"]["upper"]["holds"]
    code, out = run(capsys, "gen-dual", "--k", "1", "--dx", "1", "--dy", "1")
    assert code == EXIT_OK and json.loads(out.out)["ell"] == 2


def test_module_entry_point(pair):
    res = subprocess.run([sys.executable, "-m", "gwdual", "oracle", *pair], capture_output=True, text=True)
    assert res.returncode == 0 and "argmin" in res.stdout
