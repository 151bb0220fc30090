import csv
import io
import json
import math
from functools import lru_cache

import numpy as np
import pytest
import sympy as sp

from hessdiag.errors import ConfigError
from hessdiag.instances import catalog
from hessdiag.instances.base import Box
from hessdiag.instances.symbolic import SymbolicInstance
from hessdiag.verification import (
    BOUNDS,
    FAIL,
    IDENTITIES,
    PASS,
    SKIPPED,
    CheckResult,
    Report,
    SuiteConfig,
    admission,
    check_bound,
    check_identity,
    diagram_results,
    run_suite,
    sample_points,
)
from hessdiag.verification.bounds import lp_moment, phi3_constant, phi3_gauss_constants
from hessdiag.verification.identities import relative_residual


@lru_cache(maxsize=None)
def inst(name):
    return catalog(name)


def pts(name, count=8, seed=5):
    return sample_points(inst(name), count, seed, "test")


# -- report -----------------------------------------------------------------------


def test_result_status_and_worst_point():
    r = CheckResult.from_samples("x", "i", [((0.0,), 1e-8), ((1.0,), 3e-7), ((2.0,), float("nan"))], 1e-6)
    assert r.status == FAIL and r.worst_point == [2.0] and math.isinf(r.max_abs_residual)
    ok = CheckResult.from_samples("x", "i", [((0.0,), 1e-8), ((1.0,), 3e-7)], 1e-6)
    assert ok.passed and ok.worst_point == [1.0] and ok.points == 2
    assert CheckResult.from_samples("x", "i", [], 1e-6).status == SKIPPED


def test_report_serialization():
    checks = [
        CheckResult.from_samples("a", "i", [((0.5, 0.25), 1e-9)], 1e-6, "note"),
        CheckResult.from_samples("b", "i", [((0.1,), float("inf"))], 1e-6),
        CheckResult.skipped("c", "i", "requires tags"),
    ]
    rep = Report("bounds", 42, ["i"], checks, wall_time=1.23456, build="0.1.0+abc")
    d = json.loads(rep.to_json())
    assert d["wall_time"] == 1.235 and d["checks"][1]["max_abs_residual"] is None
    assert "wall_time" not in json.loads(rep.to_json(include_time=False))
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert [r["status"] for r in rows] == [PASS, FAIL, SKIPPED]
    assert rows[0]["worst_point"] == "0.5 0.25"
    assert rep.counts() == {PASS: 1, FAIL: 1, SKIPPED: 1} and not rep.ok
    assert len(rep.points_csv().splitlines()) == 3
    assert rep.summary().endswith("1 passed, 1 failed, 1 skipped in 1.2s")


def test_report_write(tmp_path):
    rep = Report("diagrams", 1, [], diagram_results(), build="b")
    rep.write(tmp_path / "r.json", tmp_path / "r.csv", tmp_path / "p.csv")
    assert json.loads((tmp_path / "r.json").read_text())["suite"] == "diagrams"
    assert (tmp_path / "r.csv").read_text().startswith("id,instance,points,max_abs_residual")


def test_diagram_assertions_all_pass():
    res = diagram_results()
    assert len(res) == 6 and all(r.passed for r in res)


# -- identities ---------------------------------------------------------------------


def test_relative_residual():
    assert relative_residual([1.0, 2.0], [1.0, 2.5]) == pytest.approx(0.5 / 3.5)


@pytest.mark.parametrize("cid", ["d1", "d2", "cor32", "lf_i"])
@pytest.mark.parametrize("name", ["quadratic_id2", "orthant2", "sine1d"])
def test_first_order_identities(cid, name):
    r = check_identity(cid, inst(name), pts(name))
    assert r.passed, r.line()


@pytest.mark.parametrize("cid", ["g_ric_relation", "zerohess", "rxx_zero", "euler", "lg_hke"])
def test_structural_identities_on_orthant(cid):
    r = check_identity(cid, inst("orthant2"), pts("orthant2"))
    assert r.passed, r.line()


def test_identity_skips_without_tags():
    r = check_identity("zerohess", inst("sine1d"), pts("sine1d"))
    assert r.status == SKIPPED and "cone" in r.notes.lower()


def test_identity_detects_wrong_right_side():
    # a deliberately wrong potential: Phi does not solve the equation for this V
    x = sp.Symbol("x1", real=True)
    y = sp.Symbol("y1", real=True)
    bad = SymbolicInstance("bad", x**2 / 2, x**2, y**2 / 2, (x,), (y,), Box((-1.0,), (1.0,)))
    r = check_identity("d1", bad, [np.array([0.3]), np.array([0.6])])
    assert r.status == FAIL


def test_identity_domain_error_is_failure():
    r = check_identity("d2", inst("sine1d"), [np.array([0.001])])
    assert r.status == FAIL and "domain" in r.notes


# -- bounds --------------------------------------------------------------------------


def test_ricci_mu_nonpos_on_sine_matches_closed_form():
    xs = [np.array([t]) for t in np.linspace(0.4, 2.7, 9)]
    r = check_bound("ricci_mu_nonpos", inst("sine1d"), xs)
    assert r.passed


def test_caffarelli_equality_case():
    r = check_bound("caffarelli2", inst("gauss_pair_1d"), pts("gauss_pair_1d"))
    assert r.passed and r.max_abs_residual == 0.0


def test_bound_skips_on_missing_constants():
    r = check_bound("phi3_bound", inst("transport:gauss:quartic"), pts("transport:gauss:quartic"))
    assert r.status == SKIPPED


def test_phi3_constants_for_perturbed_gaussian():
    k = phi3_constant(inst("perturbed_gauss_1d"))
    assert k["c"] == pytest.approx(0.5) and k["C"] == pytest.approx(1.5)
    assert k["bound"] == pytest.approx(59.15, rel=1e-3)
    g = phi3_gauss_constants(inst("perturbed_gauss_1d"))
    assert g["sup_H"] <= g["literature"] <= g["derived"]


def test_lp_moment_integrals():
    r = lp_moment(inst("perturbed_gauss_1d"))
    assert 0 < r["lhs"] <= r["rhs"] and r["error"] < 1e-6


@pytest.mark.parametrize("bid", sorted(BOUNDS))
def test_every_bound_runs_or_skips(bid):
    for name in ["orthant2", "perturbed_gauss_1d"]:
        r = check_bound(bid, inst(name), pts(name, 4))
        assert r.status in (PASS, FAIL, SKIPPED)
        if bid != "ric2n_nonneg":
            assert r.status != FAIL, r.line() + " " + r.notes


def test_ric2n_documented_counterexample():
    # Ric_mu,2n has smallest h-eigenvalue -1/2 on both KE instances
    for name in ["orthant2", "sine1d"]:
        r = check_bound("ric2n_nonneg", inst(name), pts(name))
        assert r.status == FAIL and r.max_abs_residual == pytest.approx(0.5, abs=1e-9)


# -- suite -------------------------------------------------------------------------------


def test_config_from_mapping():
    cfg = SuiteConfig.from_mapping({
        "suites": ["bounds"], "seed": 7, "jobs": 2, "instances": ["sine1d"],
        "bounds": {"ids": ["ricci_mu_nonpos"], "points": 5}, "tolerances": {"ricci_mu_nonpos": 1e-8},
    })
    assert cfg.bound_instances == ("sine1d",) and cfg.bound_points == 5 and cfg.jobs == 2


@pytest.mark.parametrize("bad", [
    {"suites": ["nope"]}, {"jobs": 0}, {"bounds": {"ids": ["nope"]}}, {"tolerances": {"nope": 1}},
    {"identities": {"points": 0}}, {"colour": 1},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        SuiteConfig.from_mapping(bad)


def test_config_load_toml(tmp_path):
    p = tmp_path / "suite.toml"
    p.write_text('suites = ["identities"]\nseed = 3\n[identities]\ninstances = ["sine1d"]\nids = ["d1"]\n')
    cfg = SuiteConfig.load(p)
    assert cfg.identity_ids == ("d1",) and cfg.seed == 3


def test_sampling_is_deterministic():
    a = sample_points(inst("sine1d"), 5, 42, "bounds")
    b = sample_points(inst("sine1d"), 5, 42, "bounds")
    c = sample_points(inst("sine1d"), 5, 42, "identities")
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_admission_rejects_inconsistent_instance():
    x = sp.Symbol("x1", real=True)
    y = sp.Symbol("y1", real=True)
    bad = SymbolicInstance("bad", x**2 / 2, x**2, y**2 / 2, (x,), (y,), Box((-1.0,), (1.0,)))
    assert "residual" in admission(bad, [np.array([0.5])])
    assert admission(inst("sine1d"), pts("sine1d")) is None


def test_non_admitted_instance_fails_its_checks():
    cfg = SuiteConfig(suites=("identities",), identity_instances=({"name": "sine1d", "box": [[-1.0], [1.0]]},),
                      identity_ids=("d1",), identity_points=30)
    rep = run_suite(cfg)
    assert not rep.ok
    assert "not admitted" in rep.checks[0].notes


def test_run_suite_small_and_order_stable():
    cfg = SuiteConfig(suites=("identities", "bounds"), identity_instances=("sine1d", "orthant2"),
                      bound_instances=("sine1d",), identity_ids=("d1", "d2"), bound_ids=("ricci_mu_nonpos",),
                      identity_points=4, bound_points=4)
    one = run_suite(cfg)
    four = run_suite(SuiteConfig(**{**cfg.__dict__, "jobs": 4}))
    assert one.to_json(include_time=False) == four.to_json(include_time=False)
    assert [c.id for c in one.checks] == ["d1", "d2", "d1", "d2", "ricci_mu_nonpos"]
    assert one.ok and one.suite == "identities+bounds"
