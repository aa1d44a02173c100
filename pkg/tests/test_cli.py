import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from featrel.cli import main
from featrel.data import make_common_cause_samples, save_csv

DATA = Path(__file__).resolve().parents[1] / "demos" / "data"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def explain_irrelevant_feature(capsys, kind):
    return run(
        capsys, "explain", "--model", str(DATA / "irrelevant_model.txt"), "--arity", "2", "--instance", "1,1",
        "--value-fn", kind, "--discrete", str(DATA / "irrelevant_dist.json"),
    )


def test_explain_marginal(capsys):
    code, out, _ = explain_irrelevant_feature(capsys, "exact-marginal")
    assert code == 0
    d = json.loads(out)
    assert d["phi"] == [0.5, 0.0]
    assert d["baseline"] == 0.5 and d["coalitions"] == 4


def test_explain_conditional(capsys):
    code, out, _ = explain_irrelevant_feature(capsys, "exact-conditional")
    assert code == 0
    assert json.loads(out)["phi"] == [0.25, 0.25]


def test_explain_linear_json_and_background(capsys, tmp_path):
    model = tmp_path / "m.json"
    model.write_text(json.dumps({"intercept": 1.0, "coefficients": [2.0, -1.0]}))
    bg = tmp_path / "bg.csv"
    bg.write_text("a,b\n0,0\n2,4\n")
    code, out, _ = run(
        capsys, "explain", "--model", str(model), "--instance", "3,1", "--value-fn", "marginal",
        "--background", str(bg), "--header",
    )
    assert code == 0
    # phi_j = a_j (x_j - mean_j), means (1, 2)
    np.testing.assert_allclose(json.loads(out)["phi"], [4.0, 1.0], atol=1e-14)


def test_explain_wls_writes_file(capsys, tmp_path):
    out_path = tmp_path / "r.json"
    code, out, _ = run(
        capsys, "explain", "--model", str(DATA / "sum_model.txt"), "--instance", "2,2", "--value-fn",
        "exact-marginal", "--discrete", str(DATA / "irrelevant_dist.json"), "--mode", "wls", "--budget", "4",
        "--out", str(out_path),
    )
    assert code == 0 and out == ""
    d = json.loads(out_path.read_text())
    assert d["method"].startswith("wls") and d["residual"] is not None


def test_missing_model_file_is_io_error(capsys, tmp_path):
    code, _, err = run(
        capsys, "explain", "--model", str(tmp_path / "none.txt"), "--instance", "1,1", "--value-fn",
        "exact-marginal", "--discrete", str(DATA / "irrelevant_dist.json"),
    )
    assert code == 2
    assert "cannot read model file" in err


def test_bad_value_fn_is_usage_error(capsys):
    code, _, err = run(capsys, "explain", "--model", "x", "--instance", "1", "--value-fn", "lime")
    assert code == 1 and "invalid choice" in err


def test_missing_source_is_usage_error(capsys):
    code, _, err = run(
        capsys, "explain", "--model", str(DATA / "irrelevant_model.txt"), "--instance", "1,1", "--value-fn",
        "cond-gauss",
    )
    assert code == 1 and "--gaussian" in err


def test_syntax_error_is_reported_with_module(capsys, tmp_path):
    m = tmp_path / "bad.txt"
    m.write_text("x1 +")
    code, _, err = run(
        capsys, "explain", "--model", str(m), "--instance", "1,1", "--value-fn", "exact-marginal", "--discrete",
        str(DATA / "irrelevant_dist.json"),
    )
    assert code == 1 and "model-core" in err and "position 4" in err


def test_numeric_failure_exit_code(capsys, tmp_path):
    m = tmp_path / "m.txt"
    m.write_text("log(x1 - 1)")
    code, _, err = run(
        capsys, "explain", "--model", str(m), "--instance", "1,1", "--value-fn", "exact-marginal", "--discrete",
        str(DATA / "irrelevant_dist.json"),
    )
    assert code == 3 and "non-finite" in err


def test_ragged_background_is_io_error(capsys, tmp_path):
    bg = tmp_path / "bg.csv"
    bg.write_text("1,2\n3\n")
    code, _, err = run(
        capsys, "explain", "--model", str(DATA / "sum_model.txt"), "--instance", "1,1", "--value-fn",
        "marginal", "--background", str(bg),
    )
    assert code == 2 and "row 2" in err


def test_experiment_gaussian_stdout(capsys):
    code, out, err = run(capsys, "experiment", "gaussian", "--runs", "3", "--samples", "100", "--seed", "1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "run,feature,method,phi,truth,error"
    assert len(lines) == 1 + 3 * 3 * 2
    assert json.loads(err)["runs"] == 3


def test_experiment_gaussian_out_files(capsys, tmp_path):
    out = tmp_path / "g.csv"
    code, _, err = run(
        capsys, "experiment", "gaussian", "--dims", "5", "--zero-coefs", "1,2", "--runs", "2", "--samples", "50",
        "--budget", "12", "--value-fn", "marginal", "--out", str(out), "--histogram",
    )
    assert code == 0
    assert out.read_text().startswith("run,feature")
    summary = json.loads(Path(str(out) + ".json").read_text())
    assert summary["methods"]["marginal"]["max_abs_error_zero_coef"] < 1e-10
    assert "error marginal" in err


def test_experiment_kernel(capsys, tmp_path):
    p = tmp_path / "d.csv"
    save_csv(p, make_common_cause_samples(400, 5, seed=0))
    code, out, err = run(capsys, "experiment", "kernel", "--background", str(p), "--header", "--runs", "2")
    assert code == 0
    assert json.loads(err)["experiment"] == "kernel"
    assert out.count("\n") == 1 + 2 * 3 * 2


def test_experiment_deterministic(capsys):
    a = run(capsys, "experiment", "gaussian", "--runs", "1", "--samples", "80", "--seed", "5")[1]
    b = run(capsys, "experiment", "gaussian", "--runs", "1", "--samples", "80", "--seed", "5")[1]
    assert a == b


def test_verify_invariants(capsys):
    code, out, _ = run(capsys, "verify", "invariants")
    assert code == 0
    assert "PASS  shapley weight normalization" in out


def test_verify_axioms_reports_expected_failure(capsys):
    code, out, _ = run(capsys, "verify", "axioms")
    assert code == 0
    lines = out.splitlines()
    cond = next(l for l in lines if "exact-discrete-conditional] sensitivity" in l)
    marg = next(l for l in lines if "exact-discrete-marginal] sensitivity" in l)
    assert cond.startswith("FAIL (expected)") and "phi_2=+0.25" in cond
    assert marg.startswith("PASS")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "featrel", "verify", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "suite" in r.stdout


def test_no_command_is_usage_error(capsys):
    assert run(capsys)[0] == 1
