import json
import subprocess
import sys

import numpy as np
import pytest

from hessdiag.cli import main
from hessdiag.diagram import library as lib
from hessdiag.diagram import parse


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("argv", [[], ["diagram"], ["verify"], ["solve"]])
def test_help(capsys, argv):
    code, out, _ = run(capsys, *argv, "--help")
    assert code == 0 and "usage" in out


def test_usage_errors(capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "diagram", "frobnicate", "--expr", "Phi(i)")[0] == 2
    assert run(capsys, "verify", "bogus")[0] == 2


def test_derive(capsys):
    code, out, _ = run(capsys, "diagram", "derive", "--expr", "Phi(i,j,k)")
    assert code == 0
    s = parse(out.strip(), symmetric=True)
    assert sorted(str(c) for c in s.terms.values()) == ["-3/2", "1"]


def test_laplacian_with_elimination(capsys):
    code, out, _ = run(capsys, "diagram", "laplacian", "--expr", "Phi(i)", "--elim", "--labeled")
    assert code == 0 and parse(out.strip()) == parse(lib.LAPLACIAN_DPHI)


def test_canon_writes_dot(capsys, tmp_path):
    dot = tmp_path / "d.dot"
    code, out, _ = run(capsys, "diagram", "canon", "--expr", "Phi(j,b,a)*Phi(i,a,b)", "--dot", str(dot))
    assert code == 0 and "Phi" in dot.read_text()


def test_contract_and_index(capsys):
    code, out, _ = run(capsys, "diagram", "contract", "--expr", "Phi(i,j,k)", "--with", "Phi(i,j,k)", "--k", "2")
    assert code == 0 and parse(out.strip(), symmetric=True) == parse(lib.CALABI, symmetric=True)
    code, out, _ = run(capsys, "diagram", "index", "--expr", "Phi(i,a,b)*Phi(j,a,b)")
    assert out.strip() == "Phi_{iab} Phi_{j}^{ab}"
    assert run(capsys, "diagram", "contract", "--expr", "Phi(i)")[0] == 2


def test_elim_with_seed(capsys):
    code, a, _ = run(capsys, "diagram", "elim", "--expr", "Phi(i,a,a,b,b)", "--seed", "3")
    code2, b, _ = run(capsys, "diagram", "elim", "--expr", "Phi(i,a,a,b,b)")
    assert code == code2 == 0 and a == b


def test_eval(capsys):
    code, out, _ = run(capsys, "diagram", "eval", "--expr", "Phi(i,a,b)*Phi(j,a,b)", "--instance", "orthant2",
                       "--at", "1,2")
    assert code == 0
    np.testing.assert_allclose(json.loads(out), [[4, 0], [0, 1]], atol=1e-12)


@pytest.mark.parametrize("argv, code", [
    (["diagram", "canon", "--expr", "Phi(i,"], 2),
    (["diagram", "elim", "--expr", "Phi(i,j,k,l,a,a)"], 3),
    (["diagram", "eval", "--expr", "Phi(i,j)", "--instance", "orthant2", "--at=-1,2"], 4),
    (["diagram", "eval", "--expr", "Phi(i,j)", "--instance", "orthant2", "--at", "1"], 2),
    (["diagram", "eval", "--expr", "Phi(i,j)", "--instance", "nope", "--at", "1"], 2),
    (["diagram", "eval", "--expr", "Phi(i,j)"], 2),
    (["diagram", "canon", "--expr", "Phi(i)", "--at", "x,y"], 2),
])
def test_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


def test_verify_diagrams(capsys, tmp_path):
    js, cs, pc = tmp_path / "r.json", tmp_path / "r.csv", tmp_path / "p.csv"
    code, out, _ = run(capsys, "verify", "diagrams", "--json", str(js), "--csv", str(cs), "--points-csv", str(pc))
    assert code == 0 and "6 passed" in out
    assert len(json.loads(js.read_text())["checks"]) == 6


def test_verify_bound_on_sine(capsys, tmp_path):
    js = tmp_path / "r.json"
    code, out, _ = run(capsys, "verify", "bounds", "--instance", "sine1d", "--id", "ricci_mu_nonpos", "--json", str(js))
    assert code == 0
    (check,) = json.loads(js.read_text())["checks"]
    assert check["status"] == "pass" and check["points"] == 50


def test_verify_failures_exit_one(capsys):
    code, out, _ = run(capsys, "verify", "bounds", "--instance", "sine1d", "--id", "ric2n_nonneg", "--points", "5")
    assert code == 1 and "FAIL" in out


def test_verify_tolerance_override(capsys, tmp_path):
    js = tmp_path / "r.json"
    run(capsys, "verify", "identities", "--instance", "sine1d", "--id", "d1", "--points", "3", "--tol", "0.5",
        "--json", str(js))
    assert json.loads(js.read_text())["checks"][0]["tolerance"] == 0.5


def test_verify_config_errors(capsys, tmp_path):
    assert run(capsys, "verify", "all", "--id", "nope")[0] == 2
    assert run(capsys, "verify", "all", "--config", str(tmp_path / "missing.toml"))[0] == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("jobs = 0\n")
    assert run(capsys, "verify", "all", "--config", str(bad))[0] == 2
    assert run(capsys, "verify", "identities", "--instance", "nope")[0] == 2


def test_verify_config_file(capsys, tmp_path):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"identities": {"instances": ["sine1d"], "ids": ["d1"], "points": 2}}))
    code, out, _ = run(capsys, "verify", "identities", "--config", str(cfg))
    assert code == 0 and "1 passed" in out


def test_solve_transport(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "transport1d", "--source", "gauss", "--target", "gauss:0.25",
                       "--points", "21", "--out", str(tmp_path / "t"))
    summary = json.loads(out)
    assert code == 0 and summary["ma_residual"] < 1e-10
    assert summary["phi2_min"] == pytest.approx(0.5, abs=1e-10) and summary["phi2_max"] == pytest.approx(0.5, abs=1e-10)
    header = json.loads((tmp_path / "t.json").read_text())
    data = np.fromfile(tmp_path / header["data"], dtype="<f8").reshape(21, len(header["columns"]))
    np.testing.assert_allclose(data[:, 1], 0.5 * data[:, 0], atol=1e-10)


def test_solve_torus(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "torus2d", "--grid", "32", "--vpert", "0.05*cos(x1)", "--out", str(tmp_path / "u"))
    summary = json.loads(out)
    assert code == 0 and summary["residual"] < 1e-9 and summary["newton_steps"] <= 12
    assert (tmp_path / "u.bin").stat().st_size == 8 * 32 * 32


def test_solve_errors(capsys):
    assert run(capsys, "solve", "torus2d", "--vpert", "cos(z)")[0] == 2
    assert run(capsys, "solve", "transport1d", "--target", "cauchy")[0] == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "hessdiag.cli", "verify", "diagrams"], capture_output=True, text=True)
    assert out.returncode == 0 and "6 passed" in out.stdout


def test_solver_failure_exit_code(capsys):
    code, _, err = run(capsys, "solve", "torus2d", "--grid", "32", "--vpert", "3*cos(x1)")
    assert code == 4 and "numeric error" in err
