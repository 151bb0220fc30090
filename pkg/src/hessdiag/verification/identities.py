"""Exact-form identity checks: each compares two independently computed sides.

The left side is a finite-difference weighted Laplacian (or a direct formula)
and the right side a diagram closed form or curvature expression.  The
residual at a point is max|lhs - rhs| / (1 + max|rhs|).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, Optional, Sequence, Tuple

import numpy as np

from hessdiag import geometry as geo
from hessdiag.diagram import library as lib
from hessdiag.diagram.dsl import parse
from hessdiag.errors import DomainError
from hessdiag.instances.base import CONE, KE, PotentialInstance
from hessdiag.verification.report import CheckResult

FD_TOL = 1e-6
EXACT_TOL = 1e-9


@lru_cache(maxsize=None)
def _sum(text: str, symmetric: bool = False):
    return parse(text, symmetric=symmetric)


def relative_residual(lhs: np.ndarray, rhs: np.ndarray) -> float:
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    return float(np.max(np.abs(lhs - rhs)) / (1.0 + np.max(np.abs(rhs))))


def _phi_field(inst, order):
    return lambda y: geo.PointData(inst, y).phi(order)


def calabi(pd: geo.PointData) -> np.ndarray:
    p3 = pd.phi(3)
    return np.einsum("iab,jcd,ac,bd->ij", p3, p3, pd.h_inv, pd.h_inv)


# -- test function for the one-form identity ---------------------------------


def test_function_jet(x: np.ndarray, order: int) -> np.ndarray:
    """Derivative of f(x) = sin(theta . x) + exp(0.2 sum x) of the given order."""
    n = x.size
    theta = np.array([0.7, -0.4, 0.55, 0.3][:n] + [0.25] * max(0, n - 4))
    s = float(theta @ x)
    trig = [np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)][order % 4](s)
    out = trig * np.ones(())
    ones = np.full(n, 0.2)
    ex = np.exp(0.2 * float(np.sum(x))) * np.ones(())
    for _ in range(order):
        out = np.multiply.outer(out, theta)
        ex = np.multiply.outer(ex, ones)
    return out + ex


def lf_rhs(pd: geo.PointData) -> np.ndarray:
    """L(df)_i from third derivatives of f, the cubic form, V, W and g."""
    x = pd.x
    f1, f2, f3 = (test_function_jet(x, k) for k in (1, 2, 3))
    hi = pd.h_inv
    p3 = pd.phi(3)
    g = calabi(pd)
    f_up = hi @ f1
    term1 = np.einsum("mk,imk->i", hi, f3)
    term2 = np.einsum("iab,am,bk,mk->i", p3, hi, hi, f2)
    term3 = np.einsum("l,li->i", pd.w_natural(1), f2)
    term4 = 0.5 * (pd.v(2) - pd.w(2)) @ f_up
    term5 = 0.25 * g @ f_up
    return term1 - term2 - term3 + term4 + term5


# -- check table ----------------------------------------------------------------


@dataclass(frozen=True)
class IdentitySpec:
    id: str
    tolerance: float
    fn: Callable[[PotentialInstance, np.ndarray], Tuple[np.ndarray, np.ndarray, str]]
    requires: FrozenSet[str] = frozenset()
    min_phi_order: int = 3
    min_dim: int = 1
    description: str = ""


def _d1(inst, x):
    lhs = geo.weighted_laplacian_fd(_phi_field(inst, 1), inst, x, rank=0).components
    return lhs, geo.evaluate_diagram(_sum(lib.SCALAR_LAPLACIAN_D1), inst, x).components


def _d2(inst, x):
    lhs = geo.weighted_laplacian_fd(_phi_field(inst, 2), inst, x, rank=0).components
    return lhs, geo.evaluate_diagram(_sum(lib.SCALAR_LAPLACIAN_D2), inst, x).components


def _d3(inst, x):
    lhs = geo.weighted_laplacian_fd(_phi_field(inst, 3), inst, x, rank=0).components
    return lhs, geo.evaluate_diagram(_sum(lib.SCALAR_LAPLACIAN_D3), inst, x).components


def _lf(inst, x):
    lhs = geo.weighted_laplacian_fd(lambda y: test_function_jet(np.asarray(y, float), 1), inst, x, rank=1)
    return lhs.components, lf_rhs(geo.PointData(inst, x))


def _cor32(inst, x):
    lhs = geo.weighted_laplacian_fd(_phi_field(inst, 1), inst, x, rank=1).components
    return lhs, geo.evaluate_diagram(_sum(lib.LAPLACIAN_DPHI), inst, x).components


def _lphi3(inst, x):
    lhs = geo.weighted_laplacian_fd(_phi_field(inst, 3), inst, x, rank=3).components
    return lhs, geo.evaluate_diagram(_sum(lib.LAPLACIAN_PHI3), inst, x).components


def _lg_lhs(inst, x):
    return geo.weighted_laplacian_fd(lambda y: calabi(geo.PointData(inst, y)), inst, x, rank=2).components


def _lg(inst, x):
    return _lg_lhs(inst, x), geo.evaluate_diagram(lib.laplacian_calabi_full(), inst, x).components


def lg_hke_rhs(inst, x) -> np.ndarray:
    """2 g . Ric_mu + 2 nabla Phi_3 . nabla Phi_3 + 8 R.R for Kaehler-Einstein potentials."""
    pd = geo.PointData(inst, x)
    cp = geo.curvature_pack(inst, pd)
    g = calabi(pd)
    quartic = geo.evaluate_diagram(
        2 * lib.nabla_phi3_squared() + 8 * _sum(lib.RIEMANN_SQUARED, True), inst, pd
    ).components
    return 2 * geo.symmetric_product(g, cp.ricci_mu, pd.h_inv) + quartic


def _lg_hke(inst, x):
    rhs = lg_hke_rhs(inst, x)
    general = geo.evaluate_diagram(lib.laplacian_calabi_full(), inst, x).components
    return _lg_lhs(inst, x), rhs, f"{relative_residual(rhs, general):.3e}"


def _g_ric(inst, x):
    pd = geo.PointData(inst, x)
    cp = geo.curvature_pack(inst, pd)
    return calabi(pd), 4 * cp.ricci_mu_hessian_route - 2 * inst.alpha * pd.h


def _zerohess(inst, x):
    pd = geo.PointData(inst, x)
    up = pd.h_inv @ pd.phi(1)
    return pd.phi(2) - 0.5 * np.einsum("k,ijk->ij", up, pd.phi(3)), np.zeros((inst.n, inst.n))


def _rxx(inst, x):
    pd = geo.PointData(inst, x)
    R = geo.riemann_tensor(pd.phi(3), pd.h_inv)
    return np.einsum("ikjl,k,l->ij", R, pd.x, pd.x), np.zeros((inst.n, inst.n))


def _euler(inst, x):
    pd = geo.PointData(inst, x)
    xs = pd.x
    r0 = float(pd.phi(1) @ xs) - 2 * inst.n / inst.alpha
    r1 = pd.phi(2) @ xs + pd.phi(1)
    r2 = 2 * pd.phi(2) + np.einsum("ijk,k->ij", pd.phi(3), xs)
    lhs = np.concatenate([[r0], r1.ravel(), r2.ravel()])
    return lhs, np.zeros_like(lhs)


IDENTITIES: Dict[str, IdentitySpec] = {
    s.id: s
    for s in [
        IdentitySpec("d1", FD_TOL, _d1, description="L Phi_i = -V_i"),
        IdentitySpec("d2", FD_TOL, _d2, description="L Phi_ij = -V_ij + W_ij + g_ij"),
        IdentitySpec("d3", FD_TOL, _d3, min_phi_order=5, description="L Phi_ijk, five diagram shapes"),
        IdentitySpec("lf_i", FD_TOL, _lf, description="tensor Laplacian of df for a test function f"),
        IdentitySpec("cor32", FD_TOL, _cor32, description="tensor Laplacian of d Phi"),
        IdentitySpec("lphi3", FD_TOL, _lphi3, min_phi_order=5, description="tensor Laplacian of D^3 Phi"),
        IdentitySpec("lg", FD_TOL, _lg, min_phi_order=5, description="tensor Laplacian of the Calabi tensor"),
        IdentitySpec("lg_hke", FD_TOL, _lg_hke, requires=frozenset({KE}), min_phi_order=5,
                     description="Calabi-tensor Laplacian through Ric_mu (Kaehler-Einstein)"),
        IdentitySpec("g_ric_relation", EXACT_TOL, _g_ric, requires=frozenset({KE}),
                     description="g = 4 Ric_mu - 2 alpha h"),
        IdentitySpec("zerohess", EXACT_TOL, _zerohess, requires=frozenset({CONE}),
                     description="Riemannian Hessian of Phi vanishes on cones"),
        IdentitySpec("rxx_zero", EXACT_TOL, _rxx, requires=frozenset({CONE}),
                     description="R(i, x, j, x) = 0 on cones"),
        IdentitySpec("euler", EXACT_TOL, _euler, requires=frozenset({CONE}),
                     description="Euler relations of the log-homogeneous potential"),
    ]
}


def applicable(spec: IdentitySpec, inst: PotentialInstance) -> Optional[str]:
    """Reason the check cannot run on the instance, or None."""
    missing = spec.requires - inst.tags
    if missing:
        return f"requires tags {sorted(missing)}"
    if inst.max_phi_order < spec.min_phi_order:
        return f"needs Phi derivatives of order {spec.min_phi_order}, instance has {inst.max_phi_order}"
    if inst.n < spec.min_dim:
        return f"needs dimension >= {spec.min_dim}"
    return None


def check_identity(id: str, inst: PotentialInstance, sample: Sequence[np.ndarray],
                   tol: Optional[float] = None) -> CheckResult:
    spec = IDENTITIES[id]
    tol = spec.tolerance if tol is None else tol
    reason = applicable(spec, inst)
    if reason:
        return CheckResult.skipped(id, inst.name, reason, "identities", tol)
    samples, extra = [], []
    errors = []
    for x in sample:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        try:
            out = spec.fn(inst, x)
        except DomainError as exc:
            errors.append(str(exc))
            samples.append((tuple(x), float("inf")))
            continue
        lhs, rhs = out[0], out[1]
        if len(out) > 2:
            extra.append(float(out[2]))
        samples.append((tuple(x), relative_residual(lhs, rhs)))
    notes = spec.description
    if extra:
        notes += f"; max deviation from the general right side {max(extra):.3e}"
    if errors:
        notes += f"; domain errors at {len(errors)} points: {errors[0]}"
    return CheckResult.from_samples(id, inst.name, samples, tol, notes, "identities")
