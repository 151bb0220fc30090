"""Numeric Hessian geometry at a point: metric, curvature, diagrams, and a
finite-difference weighted Laplacian for tensor fields.

All reported tensors are stored with lowered indices.  W derivatives are
taken at y = grad Phi(x) and lowered through the Hessian on every index.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from hessdiag.diagram.core import PHI, V, W, BasicDiagram, DiagramSum
from hessdiag.errors import DomainError
from hessdiag.instances.base import PotentialInstance


@dataclass(frozen=True)
class TensorEval:
    order: int
    n: int
    components: np.ndarray
    point: Tuple[float, ...]

    def is_symmetric(self, atol: float = 1e-12) -> bool:
        c = self.components
        return all(
            np.allclose(c, np.transpose(c, perm), atol=atol, rtol=0)
            for perm in itertools.permutations(range(self.order))
        )


def slot_contract(T: np.ndarray, M: np.ndarray, axis: int) -> np.ndarray:
    """R[..., i, ...] = sum_k M[k, i] T[..., k, ...] on the given axis."""
    return np.moveaxis(np.tensordot(T, M, axes=([axis], [0])), -1, axis)


def lower_all(T: np.ndarray, h: np.ndarray, rank: Optional[int] = None) -> np.ndarray:
    rank = T.ndim if rank is None else rank
    for a in range(rank):
        T = slot_contract(T, h, a)
    return T


class PointData:
    """Lazily computed derivative arrays of one instance at one point."""

    def __init__(self, inst: PotentialInstance, x):
        self.inst = inst
        self.x = np.atleast_1d(np.asarray(x, dtype=float))
        self.n = inst.n
        self._cache: Dict[Tuple[str, int], np.ndarray] = {}
        self.h = self.phi(2)
        evals = np.linalg.eigvalsh(self.h)
        if not np.all(np.isfinite(self.h)) or evals[0] <= 0:
            raise DomainError(
                f"{inst.name}: Hessian not positive definite at {self.x.tolist()} (min eigenvalue {evals[0]:.3g})"
            )
        self.h_inv = np.linalg.inv(self.h)
        self.y = self.phi(1)

    def _get(self, key, fn):
        if key not in self._cache:
            val = np.asarray(fn(), dtype=float)
            if not np.all(np.isfinite(val)):
                raise DomainError(f"{self.inst.name}: non-finite {key[0]} derivative at {self.x.tolist()}")
            self._cache[key] = val
        return self._cache[key]

    def phi(self, k: int) -> np.ndarray:
        return self._get(("phi", k), lambda: self.inst.phi(k, self.x))

    def v(self, k: int) -> np.ndarray:
        return self._get(("v", k), lambda: self.inst.v(k, self.x))

    def w_natural(self, k: int) -> np.ndarray:
        return self._get(("w", k), lambda: self.inst.w(k, self.y))

    def w(self, k: int) -> np.ndarray:
        """Lowered W derivative: every index contracted with the Hessian."""
        return self._get(("wl", k), lambda: lower_all(self.w_natural(k), self.h))

    def atom(self, label: str, k: int) -> np.ndarray:
        if label == PHI:
            return self.phi(k)
        if label == V:
            return self.v(k)
        return self.w(k)


def point_data(inst: PotentialInstance, x) -> PointData:
    return x if isinstance(x, PointData) else PointData(inst, x)


# ---------------------------------------------------------------------------
# metric and curvature


@dataclass(frozen=True)
class MetricPack:
    h: np.ndarray
    h_inv: np.ndarray
    christoffel: np.ndarray  # [k, i, j] = Gamma^k_ij
    P: float
    g: np.ndarray
    grad_P: np.ndarray


def metric_pack(inst: PotentialInstance, x) -> MetricPack:
    pd = point_data(inst, x)
    p3 = pd.phi(3)
    gamma = 0.5 * np.einsum("kl,lij->kij", pd.h_inv, p3)
    g = np.einsum("iab,jcd,ac,bd->ij", p3, p3, pd.h_inv, pd.h_inv)
    P = 0.5 * (float(pd.v(0)) + float(pd.w(0)))
    grad_P = 0.5 * (pd.v(1) + pd.w(1))
    return MetricPack(pd.h, pd.h_inv, gamma, P, 0.5 * (g + g.T), grad_P)


@dataclass(frozen=True)
class CurvaturePack:
    riemann: np.ndarray  # R_ikjl
    ricci: np.ndarray  # h-trace of riemann over the 2nd and 4th slots
    ricci_formula: np.ndarray  # (1/4)(g + Phi_ijk (V^k - W^k))
    ricci_mu: np.ndarray  # (1/4)g + (1/2)V_ij + (1/2)W_ij
    ricci_mu_hessian_route: np.ndarray  # ricci + (1/2) Hessian_h(V + W o grad Phi)
    grad_P: np.ndarray
    h: np.ndarray
    n: int
    H: Optional[np.ndarray]

    def ricci_mu_N(self, N: Optional[float] = None) -> np.ndarray:
        """Ric_mu - (N - n)^{-1} dP (x) dP; default N = 2n."""
        N = 2 * self.n if N is None else N
        if N <= self.n:
            raise ValueError("need N > n")
        return self.ricci_mu - np.outer(self.grad_P, self.grad_P) / (N - self.n)


def riemann_tensor(p3: np.ndarray, h_inv: np.ndarray) -> np.ndarray:
    """R_ikjl = (1/4)(Phi_ila Phi^a_kj - Phi_ija Phi^a_kl)."""
    t1 = np.einsum("ila,ab,bkj->ikjl", p3, h_inv, p3)
    t2 = np.einsum("ija,ab,bkl->ikjl", p3, h_inv, p3)
    return 0.25 * (t1 - t2)


def h_tensor(pd: PointData) -> Optional[np.ndarray]:
    """H_ij = Tr[((V+W)^(2))^{-1} (V-W)^(3)_i h^{-1} (V-W)^(3)_j], None when singular."""
    A = pd.v(2) + pd.w(2)
    try:
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(A_inv)) or np.linalg.cond(A) > 1e14:
        return None
    B = pd.v(3) - pd.w(3)
    H = np.einsum("ab,ibc,cd,jda->ij", A_inv, B, pd.h_inv, B)
    return 0.5 * (H + H.T)


def curvature_pack(inst: PotentialInstance, x) -> CurvaturePack:
    pd = point_data(inst, x)
    mp = metric_pack(inst, pd)
    p3 = pd.phi(3)
    R = riemann_tensor(p3, pd.h_inv)
    ric = np.einsum("ikjl,kl->ij", R, pd.h_inv)
    v_up = pd.h_inv @ pd.v(1)
    w_up = pd.w_natural(1)
    ric_f = 0.25 * (mp.g + np.einsum("ijk,k->ij", p3, v_up - w_up))
    ric_mu = 0.25 * mp.g + 0.5 * pd.v(2) + 0.5 * pd.w(2)
    # Hessian of f = V + W(grad Phi): f_i = V_i + W_i, f_ij = V_ij + Phi_ija w^a + W_ij
    f1 = pd.v(1) + pd.w(1)
    f2 = pd.v(2) + np.einsum("ija,a->ij", p3, w_up) + pd.w(2)
    hess_f = f2 - np.einsum("kij,k->ij", mp.christoffel, f1)
    ric_mu_1 = ric + 0.5 * hess_f
    sym = lambda a: 0.5 * (a + a.T)
    return CurvaturePack(
        riemann=R, ricci=sym(ric), ricci_formula=sym(ric_f), ricci_mu=sym(ric_mu),
        ricci_mu_hessian_route=sym(ric_mu_1), grad_P=mp.grad_P, h=pd.h, n=inst.n, H=h_tensor(pd),
    )


def pencil_eigs(Q: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Generalized eigenvalues of (Q, h) in ascending order."""
    Q = np.atleast_2d(Q)
    h = np.atleast_2d(h)
    try:
        np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise DomainError("metric is not positive definite") from exc
    return scipy.linalg.eigh(0.5 * (Q + Q.T), h, eigvals_only=True)


def pencil_max_eig(Q: np.ndarray, h: np.ndarray) -> float:
    """sup of Q(v, v) over h(v, v) = 1."""
    return float(pencil_eigs(Q, h)[-1])


def pencil_min_eig(Q: np.ndarray, h: np.ndarray) -> float:
    return float(pencil_eigs(Q, h)[0])


def symmetric_product(T: np.ndarray, S: np.ndarray, h_inv: np.ndarray) -> np.ndarray:
    """(T . S)_ij = (1/2)(T_ik S^k_j + T_jk S^k_i)."""
    T, S, h_inv = np.atleast_2d(T), np.atleast_2d(S), np.atleast_2d(h_inv)
    if T.shape != S.shape or T.shape != h_inv.shape:
        raise ValueError(f"shape mismatch {T.shape}, {S.shape}, {h_inv.shape}")
    M = T @ h_inv @ S
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------------------
# diagrams


def _evaluate_term(d: BasicDiagram, pd: PointData, leg_order: Sequence[int]) -> np.ndarray:
    if not d.vertices:
        return np.asarray(float(pd.n) ** d.n_power)
    letters = iter(string.ascii_letters)
    slots = [[] for _ in d.vertices]
    out = {}
    for t, (v, _) in enumerate(d.legs):
        ch = next(letters)
        slots[v].append(ch)
        out[t] = ch
    operands, specs = [], []
    for u, w in d.edges:
        a, b = next(letters), next(letters)
        slots[u].append(a)
        slots[w].append(b)
        operands.append(pd.h_inv)
        specs.append(a + b)
    for lab, s in zip(d.vertices, slots):
        operands.append(pd.atom(lab, len(s)))
        specs.append("".join(s))
    out_spec = "".join(out[t] for t in leg_order)
    val = np.einsum(",".join(specs) + "->" + out_spec, *operands, optimize=len(operands) > 2)
    return val * float(pd.n) ** d.n_power


def evaluate_diagram(s: DiagramSum, inst: PotentialInstance, x) -> TensorEval:
    """Value of a labeled or symmetric sum; free axes follow sorted labels."""
    pd = point_data(inst, x)
    L = s.num_legs
    total = np.zeros((pd.n,) * L)
    mode = s.mode if s else "scalar"
    if mode == "mixed":
        raise ValueError("cannot evaluate a partially labeled sum")
    for d, c in s:
        if mode == "labeled":
            labels = [lab for _, lab in d.legs]
            order = sorted(range(L), key=lambda t: labels[t])
            val = _evaluate_term(d, pd, order)
        else:
            val = _evaluate_term(d, pd, range(L))
            if L > 1:
                val = sum(np.transpose(val, p) for p in itertools.permutations(range(L))) / math.factorial(L)
        total = total + float(c) * val
    return TensorEval(L, pd.n, total, tuple(pd.x.tolist()))


# ---------------------------------------------------------------------------
# finite-difference weighted Laplacian


def fd_step(x: np.ndarray, base: float = 1e-3, floor: float = 0.5) -> np.ndarray:
    """Per-coordinate steps: ``base`` times max(|x_i|, floor).

    Shrinking the step with small coordinates keeps the stencil well inside
    domains with a singular boundary at x_i = 0 (the orthant)."""
    return base * np.maximum(floor, np.abs(np.atleast_1d(np.asarray(x, dtype=float))))


def fd_derivatives(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step):
    """Value, gradient and Hessian of an array-valued f by central differences
    with two-level Richardson extrapolation; derivative axes are appended.
    ``step`` is a scalar or one step per coordinate."""
    x = np.asarray(x, dtype=float)
    n = x.size
    steps = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    f0 = np.asarray(f(x), dtype=float)

    def level(s):
        d1 = np.zeros(f0.shape + (n,))
        d2 = np.zeros(f0.shape + (n, n))
        E = np.diag(s)
        for i in range(n):
            fp, fm = np.asarray(f(x + E[i])), np.asarray(f(x - E[i]))
            d1[..., i] = (fp - fm) / (2 * s[i])
            d2[..., i, i] = (fp - 2 * f0 + fm) / s[i] ** 2
        for i in range(n):
            for j in range(i + 1, n):
                ei, ej = E[i], E[j]
                val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * s[i] * s[j])
                d2[..., i, j] = val
                d2[..., j, i] = val
        return d1, d2

    a1, a2 = level(steps)
    b1, b2 = level(steps / 2)
    return f0, (4 * b1 - a1) / 3, (4 * b2 - a2) / 3


def christoffel_derivative(inst: PotentialInstance, pd: PointData, step) -> np.ndarray:
    """dGamma[k, p, i, q] = d_q Gamma^k_pi, analytic when Phi_4 is available."""
    if inst.max_phi_order >= 4:
        p3, p4 = pd.phi(3), pd.phi(4)
        dh_inv = -np.einsum("ka,abq,bl->klq", pd.h_inv, p3, pd.h_inv)
        return 0.5 * (np.einsum("klq,lpi->kpiq", dh_inv, p3) + np.einsum("kl,lpiq->kpiq", pd.h_inv, p4))

    def gamma(y):
        q = PointData(inst, y)
        return 0.5 * np.einsum("kl,lij->kij", q.h_inv, q.phi(3))

    return fd_derivatives(gamma, pd.x, step)[1]


def weighted_laplacian_fd(
    field: Callable[[np.ndarray], np.ndarray],
    inst: PotentialInstance,
    x,
    rank: int,
    step=None,
) -> TensorEval:
    """L T = h^{pq} nabla_q nabla_p T - (1/2)(V^k + W^k) nabla_k T.

    ``field(x)`` returns an array whose first ``rank`` axes are covariant
    indices; any further axes are independent scalar components.  Partial
    derivatives come from central differences; the connection terms use the
    analytic Christoffel symbols of the instance.  No Monge-Ampere relation is
    used, so this route is independent of the diagram calculus.
    """
    pd = point_data(inst, x)
    xs = pd.x
    step = fd_step(xs) if step is None else np.broadcast_to(np.asarray(step, dtype=float), xs.shape)
    if np.min(step) < 1e-8:
        raise DomainError("finite-difference step underflow")
    if not inst.box.contains(xs, margin=4 * float(np.max(step))):
        raise DomainError(f"{inst.name}: {xs.tolist()} is outside the sampling box")
    T, dT, d2T = fd_derivatives(field, xs, step)
    if not (np.all(np.isfinite(dT)) and np.all(np.isfinite(d2T))):
        raise DomainError(f"{inst.name}: non-finite field values near {xs.tolist()}")
    n = pd.n
    G = 0.5 * np.einsum("kl,lij->kij", pd.h_inv, pd.phi(3))
    dG = christoffel_derivative(inst, pd, step)

    nab = dT.copy()  # nab[..., p] = nabla_p T
    for p in range(n):
        for a in range(rank):
            nab[..., p] -= slot_contract(T, G[:, p, :], a)
    second = d2T.copy()  # second[..., p, q] = nabla_q nabla_p T
    for p in range(n):
        for q in range(n):
            corr = np.zeros_like(T)
            for a in range(rank):
                corr += slot_contract(T, dG[:, p, :, q], a)
                corr += slot_contract(dT[..., q], G[:, p, :], a)
                corr += slot_contract(nab[..., p], G[:, q, :], a)
            corr += np.tensordot(nab, G[:, q, p], axes=([-1], [0]))
            second[..., p, q] -= corr
    lap = np.einsum("...pq,pq->...", second, pd.h_inv)
    drift = pd.h_inv @ pd.v(1) + pd.w_natural(1)
    val = lap - 0.5 * np.tensordot(nab, drift, axes=([-1], [0]))
    return TensorEval(rank, n, val, tuple(xs.tolist()))


def component_field(inst: PotentialInstance, fn: Callable[[PointData], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a function of PointData as a field of x."""
    return lambda y: np.asarray(fn(PointData(inst, y)), dtype=float)


def diagram_field(s: DiagramSum, inst: PotentialInstance) -> Callable[[np.ndarray], np.ndarray]:
    return lambda y: evaluate_diagram(s, inst, y).components


def scalar_weighted_laplacian_fd(f: Callable[[np.ndarray], float], inst: PotentialInstance, x, step=None) -> float:
    """L f = Phi^{ij} f_ij - W^i f_i for a scalar field, W^i = dW/dy_i at grad Phi."""
    pd = point_data(inst, x)
    step = fd_step(pd.x) if step is None else step
    if not inst.box.contains(pd.x, margin=4 * float(np.max(step))):
        raise DomainError(f"{inst.name}: {pd.x.tolist()} is outside the sampling box")
    _, d1, d2 = fd_derivatives(lambda y: np.asarray(f(y), dtype=float), pd.x, step)
    return float(np.einsum("ij,ij->", pd.h_inv, d2) - pd.w_natural(1) @ d1)
