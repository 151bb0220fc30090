"""Inequality checks.

Each check yields a margin per point that is nonnegative when the bound
holds; the recorded residual is the positive part of -margin, divided by
(1 + scale) for checks whose two sides come from finite differences.
Tensor inequalities A >= B are tested through the smallest generalized
eigenvalue of (A - B, h).
"""

from __future__ import annotations

import math
import threading
import weakref
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import integrate

from hessdiag import geometry as geo
from hessdiag.errors import DomainError
from hessdiag.instances.base import KE, TRANSPORT, PotentialInstance
from hessdiag.verification.identities import calabi
from hessdiag.verification.report import CheckResult

# -- pointwise quantities --------------------------------------------------------


def ricci_mu(pd: geo.PointData) -> np.ndarray:
    m = 0.25 * calabi(pd) + 0.5 * pd.v(2) + 0.5 * pd.w(2)
    return 0.5 * (m + m.T)


def g_norm(pd: geo.PointData) -> float:
    """||g||_h, the largest eigenvalue of the Calabi tensor relative to h."""
    return geo.pencil_max_eig(calabi(pd), pd.h)


def h_norm(pd: geo.PointData) -> float:
    H = geo.h_tensor(pd)
    if H is None:
        raise DomainError("(V + W) Hessian is singular; H unavailable")
    return geo.pencil_max_eig(H, pd.h)


def solved_range(inst: PotentialInstance) -> Tuple[float, float]:
    """Interval for 1D integrals and suprema: the solved range or the box."""
    rng = getattr(inst, "range", None)
    if rng is not None:
        return float(rng[0]), float(rng[1])
    return inst.box.lo[0], inst.box.hi[0]


def sup_grid(inst: PotentialInstance, count: int = 801) -> np.ndarray:
    if inst.n == 1:
        a, b = solved_range(inst)
        return np.linspace(a, b, count)[:, None]
    return inst.box.grid(count)


_cache: "weakref.WeakKeyDictionary[PotentialInstance, Dict[str, object]]" = weakref.WeakKeyDictionary()
_cache_lock = threading.Lock()


def _cached(inst: PotentialInstance, key: str, fn: Callable[[], object]):
    with _cache_lock:
        store = _cache.setdefault(inst, {})
        lock = store.setdefault("_lock_" + key, threading.Lock())
    with lock:
        if key not in store:
            store[key] = fn()
        return store[key]


def sup_h_norm(inst: PotentialInstance) -> float:
    """sup of ||H||_h over a dense grid of the solved range."""
    return _cached(inst, "sup_h", lambda: max(h_norm(geo.PointData(inst, x)) for x in sup_grid(inst)))


def sup_source_third(inst: PotentialInstance) -> float:
    """sup over the grid of Tr[(D^2 V)^{-1} (D^2 V_e)^2] (1D: V'''^2 / V'')."""
    def compute():
        vals = []
        for x in sup_grid(inst):
            v2, v3 = inst.v(2, x), inst.v(3, x)
            vals.append(float(v3.reshape(-1)[0] ** 2 / v2.reshape(-1)[0]))
        return max(vals)

    return _cached(inst, "sup_v3", compute)


def _constant(inst: PotentialInstance, *names: str) -> Optional[Dict[str, float]]:
    out = {}
    for k in names:
        v = inst.constants.get(k)
        if v is None or not math.isfinite(v):
            return None
        out[k] = float(v)
    return out


# -- check table -----------------------------------------------------------------


Margin = Tuple[float, float, Optional[float]]  # (margin, scale, auxiliary value for notes)


@dataclass(frozen=True)
class BoundSpec:
    id: str
    tolerance: float
    fn: Callable[[PotentialInstance, np.ndarray], Margin]
    requires: FrozenSet[str]
    relative: bool = False
    constants: Tuple[str, ...] = ()
    one_dim: bool = False
    min_dim: int = 1
    min_phi_order: int = 3
    global_check: Optional[Callable[[PotentialInstance], Tuple[float, Tuple[float, ...], str]]] = None
    description: str = ""
    aux_label: str = ""


def _ricci_mu_nonpos(inst, x):
    pd = geo.PointData(inst, x)
    lam = geo.pencil_max_eig(ricci_mu(pd), pd.h)
    return -lam, abs(lam), lam


def _lric(inst, x):
    pd = geo.PointData(inst, x)
    lric = geo.weighted_laplacian_fd(lambda y: ricci_mu(geo.PointData(inst, y)), inst, x, rank=2).components
    ric = ricci_mu(pd)
    rhs = 2 * ric @ pd.h_inv @ ric - inst.alpha * ric
    margin = geo.pencil_min_eig(lric - rhs, pd.h)
    eq3 = geo.pencil_min_eig(lric - 4 * geo.symmetric_product(ric, calabi(pd), pd.h_inv), pd.h)
    return margin, float(max(np.max(np.abs(lric)), np.max(np.abs(rhs)))), eq3


def _ric2n(inst, x):
    pd = geo.PointData(inst, x)
    mp = geo.metric_pack(inst, pd)
    ric_n = ricci_mu(pd) - np.outer(mp.grad_P, mp.grad_P) / (2 * inst.n - inst.n)
    lam = geo.pencil_min_eig(ric_n, pd.h)
    return lam, abs(lam), lam


def _levelset(inst, x):
    pd = geo.PointData(inst, x)
    B = scipy.linalg.null_space(pd.phi(1)[None, :])
    R = geo.riemann_tensor(pd.phi(3), pd.h_inv)
    ric = np.einsum("ikjl,kl->ij", R, pd.h_inv)
    lam = float(scipy.linalg.eigh(B.T @ ric @ B, B.T @ pd.h @ B, eigvals_only=True)[-1])
    return -lam, abs(lam), lam


def _lg_odot(inst, x):
    pd = geo.PointData(inst, x)
    lg = geo.weighted_laplacian_fd(lambda y: calabi(geo.PointData(inst, y)), inst, x, rank=2).components
    rhs = 2 * geo.symmetric_product(calabi(pd), ricci_mu(pd), pd.h_inv)
    margin = geo.pencil_min_eig(lg - rhs, pd.h)
    return margin, float(max(np.max(np.abs(lg)), np.max(np.abs(rhs)))), margin


def _caffarelli(inst, x):
    pd = geo.PointData(inst, x)
    bound = math.sqrt(inst.constants["C"] / inst.constants["c"])
    top = float(np.linalg.eigvalsh(pd.h)[-1])
    return bound - top, bound, top


def _prop51(inst, x):
    pd = geo.PointData(inst, x)
    if np.linalg.eigvalsh(pd.v(2) + pd.w(2))[0] < 0:
        raise DomainError("V + W Hessian is not positive semi-definite")
    lg = geo.scalar_weighted_laplacian_fd(lambda y: g_norm(geo.PointData(inst, y)), inst, x)
    gn = g_norm(pd)
    value = h_norm(pd) + 2 * lg - gn**2
    return value, gn**2, value


def _g_sqrt_k(inst, x):
    K = sup_h_norm(inst)
    gn = g_norm(geo.PointData(inst, x))
    return math.sqrt(K) - gn, math.sqrt(K), gn


def phi3_constant(inst) -> Optional[Dict[str, float]]:
    """Constants of the third-order bound from c <= D^2 V, D^2 W <= C and B."""
    k = _constant(inst, "c_V", "C_V", "c_W", "C_W", "B")
    if k is None:
        return None
    c, C, B = min(k["c_V"], k["c_W"]), max(k["C_V"], k["C_W"]), k["B"]
    M, m = math.sqrt(C / c), math.sqrt(c / C)
    c1 = c + m * m * c  # lower bound of V'' + Phi''^2 W''
    K = (1 + M**3) ** 2 * B / (c1 * m * m)  # bound on ||H||_h
    return {"c": c, "C": C, "B": B, "K": K, "bound": (C / c) ** 2 * math.sqrt(K),
            "D": (C / c) ** 2 * (1 + M**3) / (m * math.sqrt(c1))}


def _phi3_bound(inst, x):
    k = phi3_constant(inst)
    p3 = float(geo.PointData(inst, x).phi(3).reshape(-1)[0])
    return k["bound"] - p3**2, k["bound"], p3**2


def phi3_gauss_constants(inst) -> Dict[str, float]:
    c, Q = inst.constants["c_V"], inst.constants["Q"]
    T = sup_source_third(inst)
    return {"sup_H": sup_h_norm(inst), "T": T, "derived": 2 * Q / c * T, "literature": Q / c * T}


def _phi3_gauss(inst, x):
    k = phi3_gauss_constants(inst)
    gn = g_norm(geo.PointData(inst, x))
    margin = min(k["sup_H"] - gn**2, k["derived"] - k["sup_H"])
    return margin, k["derived"], gn**2


def lp_moment(inst: PotentialInstance, p: int = 4, cut: float = 1e-14) -> Dict[str, float]:
    """Integrals of ||g||_h^p and ||H||_h^{p/2} against mu = exp(-V) dx over
    the part of the solved range where either integrand exceeds ``cut`` times its peak."""
    def dens(x):
        return math.exp(-float(inst.v(0, [x])))

    def fg(x):
        return g_norm(geo.PointData(inst, [x])) ** p * dens(x)

    def fh(x):
        return h_norm(geo.PointData(inst, [x])) ** (p / 2) * dens(x)

    grid = sup_grid(inst, 2001)[:, 0]
    gv = np.array([fg(x) for x in grid])
    hv = np.array([fh(x) for x in grid])
    peak = max(gv.max(), hv.max())
    if peak == 0:
        return {"lhs": 0.0, "rhs": 0.0, "a": float(grid[0]), "b": float(grid[-1]), "error": 0.0}
    keep = np.nonzero((gv >= cut * peak) | (hv >= cut * peak))[0]
    i0, i1 = max(keep[0] - 1, 0), min(keep[-1] + 1, grid.size - 1)
    a, b = float(grid[i0]), float(grid[i1])
    opts = dict(epsabs=1e-13, epsrel=1e-11, limit=200)
    lhs, e1 = integrate.quad(fg, a, b, **opts)
    rhs, e2 = integrate.quad(fh, a, b, **opts)
    return {"lhs": lhs, "rhs": rhs, "a": a, "b": b, "error": e1 + e2}


def _lp_global(inst):
    r = lp_moment(inst)
    note = (f"int ||g||^4 dmu = {r['lhs']:.6e}, int ||H||^2 dmu = {r['rhs']:.6e} on [{r['a']:.3f}, {r['b']:.3f}], "
            f"quadrature error estimate {r['error']:.1e}")
    return r["rhs"] - r["lhs"], (r["a"], r["b"]), note


BOUNDS: Dict[str, BoundSpec] = {
    s.id: s
    for s in [
        BoundSpec("ricci_mu_nonpos", 1e-9, _ricci_mu_nonpos, frozenset({KE}),
                  description="max eigenvalue of (Ric_mu, h) <= 0", aux_label="largest eigenvalue"),
        BoundSpec("lric_ineq", 1e-6, _lric, frozenset({KE}), relative=True, min_phi_order=5,
                  description="L Ric_mu >= 2 Ric_mu^2 - alpha Ric_mu",
                  aux_label="min eigenvalue of L Ric_mu - 4 Ric_mu . g"),
        BoundSpec("ric2n_nonneg", 1e-9, _ric2n, frozenset({KE}),
                  description="min eigenvalue of (Ric_mu,2n, h) >= 0", aux_label="smallest eigenvalue"),
        BoundSpec("levelset_ricci", 1e-9, _levelset, frozenset({KE}), min_dim=2,
                  description="Ricci of h restricted to ker dPhi <= 0", aux_label="largest eigenvalue"),
        BoundSpec("caffarelli2", 1e-8, _caffarelli, frozenset({TRANSPORT}), constants=("C", "c"),
                  description="D^2 Phi <= sqrt(C/c)", aux_label="largest Hessian eigenvalue"),
        BoundSpec("prop51", 1e-5, _prop51, frozenset({TRANSPORT}), min_phi_order=5,
                  description="||H||_h + 2 L||g||_h - ||g||_h^2 >= 0", aux_label="smallest value"),
        BoundSpec("lg_odot", 1e-6, _lg_odot, frozenset({KE}), relative=True, min_phi_order=5,
                  description="L g >= 2 g . Ric_mu", aux_label="smallest eigenvalue"),
        BoundSpec("lp_moment", 1e-6, None, frozenset({TRANSPORT}), one_dim=True, global_check=_lp_global,
                  description="int ||g||^4 dmu <= int ||H||^2 dmu"),
        BoundSpec("g_sqrtK", 1e-8, _g_sqrt_k, frozenset({TRANSPORT}),
                  description="||g||_h <= sqrt(sup ||H||_h)", aux_label="largest ||g||_h"),
        BoundSpec("phi3_bound", 1e-8, _phi3_bound, frozenset({TRANSPORT}), one_dim=True,
                  constants=("c_V", "C_V", "c_W", "C_W", "B"),
                  description="Phi'''^2 <= (C/c)^2 sqrt(K(c, C, B))", aux_label="largest Phi'''^2"),
        BoundSpec("phi3_gauss", 1e-8, _phi3_gauss, frozenset({TRANSPORT}), one_dim=True, constants=("c_V", "Q"),
                  description="||g||_h^2 <= sup ||H||_h <= (2 Q / c) sup V'''^2 / V''",
                  aux_label="largest ||g||_h^2"),
    ]
}


def applicable(spec: BoundSpec, inst: PotentialInstance) -> Optional[str]:
    missing = spec.requires - inst.tags
    if missing:
        return f"requires tags {sorted(missing)}"
    if spec.one_dim and inst.n != 1:
        return "implemented for one-dimensional instances"
    if inst.n < spec.min_dim:
        return f"needs dimension >= {spec.min_dim}"
    if inst.max_phi_order < spec.min_phi_order:
        return f"needs Phi derivatives of order {spec.min_phi_order}"
    if spec.constants and _constant(inst, *spec.constants) is None:
        return f"needs finite constants {list(spec.constants)}"
    if spec.id in ("lric_ineq", "g_ric_relation") and inst.alpha is None:
        return "needs alpha"
    return None


def _extra_notes(spec: BoundSpec, inst: PotentialInstance) -> str:
    if spec.id == "phi3_bound":
        k = phi3_constant(inst)
        db = k["D"] * k["B"]
        return (f"derived bound (C/c)^2 sqrt(K) = {k['bound']:.6g} with K = {k['K']:.6g}; "
                f"D*B form gives {db:.6g}")
    if spec.id == "phi3_gauss":
        k = phi3_gauss_constants(inst)
        return (f"sup ||H||_h = {k['sup_H']:.6g}, derived constant 2Q/c gives {k['derived']:.6g}, "
                f"constant Q/c gives {k['literature']:.6g} ({'holds' if k['sup_H'] <= k['literature'] else 'violated'})")
    return ""


def check_bound(id: str, inst: PotentialInstance, sample: Sequence[np.ndarray],
                tol: Optional[float] = None) -> CheckResult:
    spec = BOUNDS[id]
    tol = spec.tolerance if tol is None else tol
    reason = applicable(spec, inst)
    if reason:
        return CheckResult.skipped(id, inst.name, reason, "bounds", tol)
    notes = spec.description
    if spec.global_check is not None:
        margin, where, note = spec.global_check(inst)
        return CheckResult.from_samples(id, inst.name, [(where, max(0.0, -margin))], tol, f"{notes}; {note}", "bounds")
    samples, aux, errors = [], [], []
    for x in sample:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        try:
            margin, scale, extra = spec.fn(inst, x)
        except DomainError as exc:
            errors.append(str(exc))
            samples.append((tuple(x), float("inf")))
            continue
        violation = max(0.0, -margin)
        if spec.relative:
            violation /= 1.0 + scale
        samples.append((tuple(x), violation))
        if extra is not None:
            aux.append(extra)
    if aux and spec.aux_label:
        lo, hi = min(aux), max(aux)
        notes += f"; {spec.aux_label} over sample in [{lo:.6g}, {hi:.6g}]"
    extra = _extra_notes(spec, inst)
    if extra:
        notes += f"; {extra}"
    if errors:
        notes += f"; domain errors at {len(errors)} points: {errors[0]}"
    return CheckResult.from_samples(id, inst.name, samples, tol, notes, "bounds")
