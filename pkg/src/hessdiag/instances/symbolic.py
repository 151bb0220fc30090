"""Instances given by closed-form sympy expressions, and the closed-form catalog."""

from __future__ import annotations

import itertools
import math
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
import sympy as sp

from hessdiag.errors import ConfigError, DomainError
from hessdiag.instances.base import (
    CONE,
    KE,
    MANUFACTURED,
    QUADRATIC,
    TRANSPORT,
    Box,
    PotentialInstance,
)


class _DerivativeTable:
    """Compiled partial derivatives of one expression up to a fixed order."""

    def __init__(self, expr: sp.Expr, symbols: Sequence[sp.Symbol], max_order: int):
        self.n = len(symbols)
        self.max_order = max_order
        self._funcs = []
        self._maps = []
        for m in range(max_order + 1):
            combos = list(itertools.combinations_with_replacement(range(self.n), m))
            pos = {c: t for t, c in enumerate(combos)}
            exprs = [sp.diff(expr, *[symbols[i] for i in c]) if c else expr for c in combos]
            self._funcs.append(sp.lambdify(list(symbols), exprs, modules="numpy", cse=True))
            idx = np.zeros((self.n,) * m, dtype=int)
            for full in itertools.product(range(self.n), repeat=m):
                idx[full] = pos[tuple(sorted(full))]
            self._maps.append(idx)

    def __call__(self, order: int, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.array([float(v) for v in self._funcs[order](*x)])
        return vals[self._maps[order]]


class SymbolicInstance(PotentialInstance):
    """Instance with Phi, V in variables x1..xn and W in y1..yn."""

    def __init__(
        self,
        name: str,
        phi: sp.Expr,
        v: sp.Expr,
        w: sp.Expr,
        xs: Sequence[sp.Symbol],
        ys: Sequence[sp.Symbol],
        box: Box,
        alpha: Optional[float] = None,
        tags: Iterable[str] = (),
        constants: Optional[Dict[str, float]] = None,
        max_phi_order: int = 5,
        max_vw_order: int = 3,
        domain: Optional[Callable[[np.ndarray], bool]] = None,
    ):
        self.name = name
        self.n = len(xs)
        self.box = box
        self.alpha = alpha
        self.tags = frozenset(tags)
        self.constants = dict(constants or {})
        self.max_phi_order = max_phi_order
        self.max_v_order = max_vw_order
        self.max_w_order = max_vw_order
        self.exprs = {"phi": phi, "v": v, "w": w}
        self.xs, self.ys = tuple(xs), tuple(ys)
        self._phi = _DerivativeTable(phi, xs, max_phi_order)
        self._v = _DerivativeTable(v, xs, max_vw_order)
        self._w = _DerivativeTable(w, ys, max_vw_order)
        self.domain = domain

    def _check_domain(self, x) -> None:
        if self.domain is not None and not self.domain(np.atleast_1d(np.asarray(x, dtype=float))):
            raise DomainError(f"{self.name}: point {np.atleast_1d(x).tolist()} outside the domain of Phi")

    def phi(self, order, x):
        self._check_order("phi", order)
        self._check_domain(x)
        return self._phi(order, x)

    def v(self, order, x):
        self._check_order("v", order)
        self._check_domain(x)
        return self._v(order, x)

    def w(self, order, y):
        self._check_order("w", order)
        return self._w(order, y)


def _symbols(n: int):
    xs = sp.symbols(f"x1:{n + 1}", real=True)
    ys = sp.symbols(f"y1:{n + 1}", real=True)
    return xs, ys


def quadratic_id(n: int = 2) -> SymbolicInstance:
    """Phi = |x|^2/2 with standard Gaussian source and target (identity map)."""
    xs, ys = _symbols(n)
    c = sp.Rational(n, 2) * sp.log(2 * sp.pi)
    phi = sum(x**2 for x in xs) / 2
    v = sum(x**2 for x in xs) / 2 + c
    w = sum(y**2 for y in ys) / 2 + c
    consts = {"c": 1.0, "C": 1.0, "B": 0.0, "Q": 0.5}
    return SymbolicInstance(
        f"quadratic_id{n}", phi, v, w, xs, ys, Box((-2.0,) * n, (2.0,) * n),
        tags=(QUADRATIC, TRANSPORT), constants=consts,
    )


def orthant(n: int = 2) -> SymbolicInstance:
    """Phi = -2 sum log x_i + n log 2 solving e^Phi = det D^2 Phi on the orthant."""
    xs, ys = _symbols(n)
    phi = -2 * sum(sp.log(x) for x in xs) + n * sp.log(2)
    return SymbolicInstance(
        f"orthant{n}", phi, -phi, sp.Integer(0), xs, ys, Box((0.2,) * n, (3.0,) * n),
        alpha=-1.0, tags=(CONE, KE), domain=lambda x: bool(np.all(x > 0)),
    )


def sine1d(a: float = 1.0) -> SymbolicInstance:
    """Phi = -2 log sin(ax) + log(2a^2) solving e^Phi = Phi'' on (0, pi/a)."""
    if a <= 0:
        raise ConfigError("sine1d needs a > 0")
    xs, ys = _symbols(1)
    x = xs[0]
    ar = sp.nsimplify(a)
    phi = -2 * sp.log(sp.sin(ar * x)) + sp.log(2 * ar**2)
    box = Box((0.3 / a,), ((math.pi - 0.3) / a,))
    name = "sine1d" if a == 1 else f"sine1d_a{a:g}"
    return SymbolicInstance(name, phi, -phi, sp.Integer(0), xs, ys, box, alpha=-1.0, tags=(KE,),
                            domain=lambda x: bool(0 < a * x[0] < math.pi))


def gauss_pair_1d(sigma: float = 0.5) -> SymbolicInstance:
    """Phi = sigma x^2/2 pushing N(0,1) to N(0, sigma^2)."""
    if sigma <= 0:
        raise ConfigError("gauss_pair_1d needs sigma > 0")
    xs, ys = _symbols(1)
    x, y = xs[0], ys[0]
    s = sp.nsimplify(sigma)
    phi = s * x**2 / 2
    v = x**2 / 2 + sp.log(2 * sp.pi) / 2
    w = y**2 / (2 * s**2) + sp.log(s * sp.sqrt(2 * sp.pi))
    consts = {"c": 1.0 / sigma**2, "C": 1.0, "c_V": 1.0, "C_V": 1.0, "c_W": 1.0 / sigma**2, "C_W": 1.0 / sigma**2,
              "B": 0.0, "Q": 1.0 / (2 * sigma**2)}
    return SymbolicInstance(
        f"gauss_pair_1d_s{sigma:g}", phi, v, w, xs, ys, Box((-4.0,), (4.0,)),
        tags=(TRANSPORT,), constants=consts,
    )


class ManufacturedInstance(SymbolicInstance):
    """Phi and W symbolic; V := W(grad Phi) - log det D^2 Phi evaluated by the chain rule.

    The derivatives of V up to order 3 are assembled from the exact Phi
    derivatives (orders up to 5) and the exact W derivatives at grad Phi, so
    the Monge-Ampere relation holds to rounding by construction.
    """

    def __init__(self, name, phi, w, xs, ys, box, tags=(MANUFACTURED,), **kw):
        super().__init__(name, phi, sp.Integer(0), w, xs, ys, box, tags=tags, max_vw_order=3, **kw)
        self.exprs["v"] = None

    def v(self, order, x):
        self._check_order("v", order)
        return manufactured_v(self.phi, self.w, order, x)


def manufactured_v(phi, w, order: int, x) -> np.ndarray:
    """Derivative of  W(grad Phi(x)) - log det D^2 Phi(x)  of the given order (<= 3)."""
    y = phi(1, x)
    h = phi(2, x)
    hinv = np.linalg.inv(h)
    if order == 0:
        sign, logdet = np.linalg.slogdet(h)
        if sign <= 0:
            raise DomainError("Hessian not positive definite")
        return np.asarray(w(0, y) - logdet)
    p3 = phi(3, x)
    w1 = w(1, y)
    A = np.einsum("ab,bci->iac", hinv, p3)  # A[i] = H^-1 Phi_i
    if order == 1:
        f = np.einsum("a,ai->i", w1, h)
        ell = np.einsum("iaa->i", A)
        return f - ell
    w2 = w(2, y)
    p4 = phi(4, x)
    B = np.einsum("ab,bcij->ijac", hinv, p4)  # B[i,j] = H^-1 Phi_ij
    if order == 2:
        f = np.einsum("ab,ai,bj->ij", w2, h, h) + np.einsum("a,aij->ij", w1, p3)
        ell = np.einsum("ijaa->ij", B) - np.einsum("jab,iba->ij", A, A)
        return f - ell
    if order != 3:
        raise DomainError("V derivatives available up to order 3")
    w3 = w(3, y)
    p5 = phi(5, x)
    C = np.einsum("ab,bcijk->ijkac", hinv, p5)
    f = (
        np.einsum("abc,ai,bj,ck->ijk", w3, h, h, h)
        + np.einsum("ab,aik,bj->ijk", w2, p3, h)
        + np.einsum("ab,ai,bjk->ijk", w2, h, p3)
        + np.einsum("ab,aij,bk->ijk", w2, p3, h)
        + np.einsum("a,aijk->ijk", w1, p4)
    )
    ell = (
        np.einsum("ijkaa->ijk", C)
        - np.einsum("kab,ijba->ijk", A, B)
        + np.einsum("kab,jbc,ica->ijk", A, A, A)
        - np.einsum("jkab,iba->ijk", B, A)
        + np.einsum("jab,kbc,ica->ijk", A, A, A)
        - np.einsum("jab,ikba->ijk", A, B)
    )
    return f - ell


def manufactured(n: int = 2, seed: int = 42, phi_expr: Optional[sp.Expr] = None, w_expr: Optional[sp.Expr] = None,
                 box: Optional[Box] = None) -> ManufacturedInstance:
    """Manufactured instance exact by construction.

    Without explicit expressions, Phi is |x|^2/2 plus two small log-cosh
    ridges and W is |y|^2/2 plus one small log-cosh ridge, drawn from ``seed``.
    Expressions must use the symbols x1..xn and y1..yn.
    """
    xs, ys = _symbols(n)
    rng = np.random.default_rng(seed)

    def rat(v: float) -> sp.Rational:
        return sp.Rational(int(round(v * 1000)), 1000)

    if phi_expr is None:
        phi_expr = sum(x**2 for x in xs) / 2
        for _ in range(2):
            eps = rat(rng.uniform(0.05, 0.15))
            a = [rat(t) for t in rng.uniform(-0.9, 0.9, size=n)]
            b = rat(rng.uniform(-0.5, 0.5))
            phi_expr += eps * sp.log(sp.cosh(sum(ai * x for ai, x in zip(a, xs)) + b))
    if w_expr is None:
        eps = rat(rng.uniform(0.05, 0.15))
        c = [rat(t) for t in rng.uniform(-0.9, 0.9, size=n)]
        d = rat(rng.uniform(-0.5, 0.5))
        w_expr = sum(y**2 for y in ys) / 2 + eps * sp.log(sp.cosh(sum(ci * y for ci, y in zip(c, ys)) + d))
    return ManufacturedInstance(
        f"manufactured{n}_s{seed}", phi_expr, w_expr, xs, ys, box or Box((-1.5,) * n, (1.5,) * n)
    )
