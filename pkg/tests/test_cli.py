import json
import subprocess
import sys

import numpy as np
import pytest

from drmtest.cli import DEFAULT_SEED, read_samples, run

EX1 = ["--f0", "gamma:2,1", "--rho", "0.4,0.3,0.3", "--basis", "x,logx", "--beta-star", "-1,1;-2,2",
       "--hypothesis", "lincomb:2*b1-b2=0"]


def write_csv(path, samples):
    lines = ["sample,value"] + [f"{k},{float(v)!r}" for k, s in enumerate(samples) for v in s]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run_json(capsys, argv):
    code = run(argv)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def identical_csv(tmp_path):
    x = [0.3, -1.2, 0.8, 2.0, -0.1, 1.4]
    return write_csv(tmp_path / "a.csv", [x, x])


@pytest.fixture
def gamma_csv(tmp_path):
    rng = np.random.default_rng(4)
    return write_csv(tmp_path / "g.csv", [rng.gamma(2 + k, 1, 60) for k in range(3)])


def test_test_identical_samples(capsys, identical_csv):
    code, doc = run_json(capsys, ["test", "--input", identical_csv, "--basis", "x,x2", "--hypothesis", "equal:all"])
    assert code == 0
    assert doc["statistic"] == 0.0 and doc["p_value"] == 1.0


def test_test_golden_keys(capsys, gamma_csv):
    code, doc = run_json(capsys, ["test", "--input", gamma_csv, "--basis", "logx,x", "--hypothesis", "equal:1,2"])
    assert code == 0
    assert list(doc) == ["statistic", "df", "p_value", "theta_hat", "diagnostics"]
    assert set(doc["theta_hat"]) == {"alpha", "beta"}
    assert doc["df"] == 2
    assert np.array(doc["theta_hat"]["beta"]).shape == (2, 2)


def test_power_example1(capsys):
    code, doc = run_json(capsys, ["power", *EX1, "--drift", "2,3;-1,0"])
    assert code == 0
    assert {"delta2", "power"} <= set(doc)
    assert doc["delta2"] == pytest.approx(10.29, abs=0.05)
    assert doc["power"] == pytest.approx(0.83, abs=0.01)


def test_samplesize_example2(capsys):
    code, doc = run_json(capsys, ["samplesize", *EX1, "--shift", "0.5,1.5;0.5,0.5", "--target", "0.8"])
    assert code == 0
    assert {"n_star", "power_at_n_star"} <= set(doc)
    assert doc["n_star"] <= 50 and doc["power_at_n_star"] >= 0.8


@pytest.mark.parametrize("method", ["wald", "perm"])
def test_other_methods(capsys, gamma_csv, method):
    code, doc = run_json(capsys, ["test", "--input", gamma_csv, "--basis", "logx,x", "--hypothesis", "equal:all",
                                  "--method", method, "--reps", "99"])
    assert code == 0 and 0 < doc["p_value"] <= 1


def test_pairwise_bonferroni(capsys, gamma_csv):
    code, doc = run_json(capsys, ["test", "--input", gamma_csv, "--basis", "logx,x", "--pairwise", "--bonferroni"])
    assert code == 0
    P = np.array(doc["p_value_matrix"])
    assert P.shape == (3, 3) and np.allclose(P, P.T)
    for pair in doc["pairs"]:
        assert pair["p_adjusted"] == pytest.approx(min(1.0, 3 * pair["p_value"]))


def test_density_csv(capsys, gamma_csv):
    assert run(["density", "--input", gamma_csv, "--basis", "logx,x", "--sample", "1", "--grid", "0:10:6"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x,value" and len(lines) == 7


def test_simulate_csv(capsys, tmp_path):
    cfg = {
        "scenario": "s",
        "families": [[{"family": "normal", "params": [0, 1], "size": 40}] * 2],
        "basis": "x,x2", "hypothesis": "equal:all", "level": 0.05, "replicates": 10, "seed": 1,
        "methods": ["DELR", "ANOVA"],
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "r.csv"
    assert run(["simulate", "--config", str(path), "--threads", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "setting,method,rate,se,failures" and len(lines) == 3


def test_usage_errors(capsys, gamma_csv):
    assert run([]) == 2
    assert run(["bogus"]) == 2
    assert run(["test", "--input", gamma_csv, "--basis", "logx,x", "--hypothesis", "equal:9,1"]) == 2
    assert run(["test", "--input", gamma_csv, "--basis", "logx,x", "--level", "2"]) == 2
    assert capsys.readouterr().out == ""


def test_data_errors(capsys, tmp_path, identical_csv):
    assert run(["test", "--input", str(tmp_path / "missing.csv"), "--basis", "x", "--hypothesis", "equal:all"]) == 3
    assert run(["test", "--input", identical_csv, "--basis", "logx", "--hypothesis", "equal:all"]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("sample,value\n0,1\n2,3\n")
    assert run(["test", "--input", str(bad), "--basis", "x", "--hypothesis", "equal:all"]) == 3
    assert run(["samplesize", *EX1, "--shift", "0,0;0,0"]) == 3
    assert capsys.readouterr().out == ""


def test_numerical_failure_exit_code(capsys, monkeypatch, identical_csv):
    import drmtest.cli as cli

    def fail(*a, **k):
        raise cli.ConvergenceError("no convergence")

    monkeypatch.setattr(cli, "delr_test", fail)
    code = run(["test", "--input", identical_csv, "--basis", "x,x2", "--hypothesis", "equal:all"])
    assert code == 4
    captured = capsys.readouterr()
    assert captured.out == "" and "numerical failure" in captured.err


def test_read_samples_header(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("group,x\n0,1\n")
    from drmtest.cli import DataError

    with pytest.raises(DataError):
        read_samples(p)


def test_default_seed_is_fixed():
    assert DEFAULT_SEED == 20160101


def test_console_script_module(identical_csv):
    proc = subprocess.run(
        [sys.executable, "-m", "drmtest.cli", "test", "--input", identical_csv, "--basis", "x,x2",
         "--hypothesis", "equal:all"],
        capture_output=True, text=True, env={"DRMTEST_LOG": "debug", "PATH": ""},
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["p_value"] == 1.0
    assert "DEBUG" in proc.stderr
