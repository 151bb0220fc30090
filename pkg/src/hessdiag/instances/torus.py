"""Periodic Monge-Ampere on the 2-torus by a pseudo-spectral damped Newton method.

Unknown: Phi = |x|^2/2 + u with u 2pi-periodic and mean zero, solving

    log det(I + D^2 u) = W_pert(x + grad u) - V_pert(x) + c

for u and the constant c.  The instance then has V = V_pert - c, W = W_pert.
Derivatives of u at arbitrary points come from its trigonometric interpolant.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import sympy as sp
from scipy.sparse.linalg import LinearOperator, gmres

from hessdiag.errors import ConfigError, DomainError, SolverError
from hessdiag.instances.base import GRIDDED, Box, PotentialInstance
from hessdiag.instances.symbolic import _DerivativeTable, _symbols

TWO_PI = 2 * math.pi


def _parse_pert(text: Union[str, sp.Expr, None], syms) -> sp.Expr:
    if text is None or text == "" or text == 0:
        return sp.Integer(0)
    if isinstance(text, sp.Expr):
        return text
    names = {str(s): s for s in syms}
    try:
        expr = sp.sympify(text, locals=names)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse perturbation {text!r}") from exc
    extra = expr.free_symbols - set(syms)
    if extra:
        raise ConfigError(f"perturbation {text!r} uses unknown symbols {sorted(map(str, extra))}")
    return expr


class _Spectral:
    """Fourier differentiation on an N x N grid over [0, 2pi)^2."""

    def __init__(self, N: int):
        if N < 8 or N % 2:
            raise ConfigError("grid size must be an even integer >= 8")
        self.N = N
        k = np.fft.fftfreq(N, 1.0 / N)
        k[N // 2] = 0.0  # Nyquist mode dropped for odd derivatives
        self.k1, self.k2 = np.meshgrid(k, k, indexing="ij")
        self.lap = -(self.k1**2 + self.k2**2)
        self.x = np.arange(N) * TWO_PI / N
        self.X1, self.X2 = np.meshgrid(self.x, self.x, indexing="ij")

    def derivs(self, u: np.ndarray):
        uh = np.fft.fft2(u)
        d = lambda m: np.real(np.fft.ifft2(m * uh))
        i = 1j
        return (
            d(i * self.k1), d(i * self.k2),
            d(-self.k1 * self.k1), d(-self.k1 * self.k2), d(-self.k2 * self.k2),
        )

    def inv_lap(self, r: np.ndarray) -> np.ndarray:
        rh = np.fft.fft2(r)
        zero = self.lap == 0
        out = rh / np.where(zero, 1.0, self.lap)
        out[zero] = 0.0
        return np.real(np.fft.ifft2(out))


class TorusInstance(PotentialInstance):
    """Gridded solution of the periodic problem, evaluated by Fourier interpolation."""

    def __init__(self, u: np.ndarray, c: float, v_pert: sp.Expr, w_pert: sp.Expr, name: str = "torus2d",
                 residual: float = float("nan"), iterations: int = 0):
        self.name = name
        self.n = 2
        self.box = Box((0.0, 0.0), (TWO_PI, TWO_PI))
        self.alpha = None
        self.tags = frozenset({GRIDDED})
        self.max_phi_order = 3
        self.max_v_order = 3
        self.max_w_order = 3
        self.constants = {}
        self.u = np.asarray(u, dtype=float)
        self.N = self.u.shape[0]
        self.c = float(c)
        self.residual = residual
        self.iterations = iterations
        self.v_pert, self.w_pert = v_pert, w_pert
        xs, ys = _symbols(2)
        self._v = _DerivativeTable(v_pert - sp.Float(self.c, 17), xs, 3)
        self._w = _DerivativeTable(w_pert, ys, 3)
        uh = np.fft.fft2(self.u) / self.N**2
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        uh[self.N // 2, :] = 0.0
        uh[:, self.N // 2] = 0.0
        self._uh = uh
        self._k = k

    def _u_derivs(self, order: int, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        e1 = np.exp(1j * self._k * x[0])
        e2 = np.exp(1j * self._k * x[1])
        out = np.zeros((2,) * order)
        for idx in np.ndindex(*out.shape):
            a = idx.count(0)
            b = order - a
            coef = self._uh * np.outer((1j * self._k) ** a * e1, (1j * self._k) ** b * e2)
            out[idx] = float(np.real(coef.sum()))
        return out

    def phi(self, order, x):
        self._check_order("phi", order)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        du = self._u_derivs(order, x)
        if order == 0:
            return np.asarray(0.5 * float(x @ x) + du)
        if order == 1:
            return x + du
        if order == 2:
            return np.eye(2) + du
        return du

    def v(self, order, x):
        self._check_order("v", order)
        return self._v(order, x)

    def w(self, order, y):
        self._check_order("w", order)
        return self._w(order, y)

    def export(self, path: Union[str, Path]) -> Dict[str, object]:
        """Write u as row-major float64 to <path>.bin with a JSON header <path>.json."""
        path = Path(path)
        stem = path.with_suffix("")
        bin_path, json_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
        np.ascontiguousarray(self.u, dtype="<f8").tofile(bin_path)
        header = {
            "name": self.name, "n": 2, "grid": [self.N, self.N],
            "box": [list(self.box.lo), list(self.box.hi)], "dtype": "float64", "order": "row-major",
            "field": "u (Phi = |x|^2/2 + u)", "c": self.c,
            "v_pert": str(self.v_pert), "w_pert": str(self.w_pert),
            "residual": self.residual, "iterations": self.iterations, "data": bin_path.name,
        }
        json_path.write_text(json.dumps(header, indent=2))
        return header


def load_torus(path: Union[str, Path]) -> TorusInstance:
    json_path = Path(path).with_suffix(".json")
    header = json.loads(json_path.read_text())
    N = header["grid"][0]
    u = np.fromfile(json_path.with_name(header["data"]), dtype="<f8").reshape(N, N)
    xs, ys = _symbols(2)
    return TorusInstance(
        u, header["c"], _parse_pert(header["v_pert"], xs), _parse_pert(header["w_pert"], ys),
        name=header["name"], residual=header["residual"], iterations=header["iterations"],
    )


def solve_ma_torus_2d(
    v_pert: Union[str, sp.Expr, None] = None,
    w_pert: Union[str, sp.Expr, None] = None,
    N: int = 64,
    tol: float = 1e-11,
    accept: float = 1e-9,
    max_iter: int = 30,
    name: Optional[str] = None,
) -> TorusInstance:
    """Damped Newton with GMRES (inverse-Laplacian preconditioner) on the grid.

    Iterates until the max-norm residual is below ``tol``; if rounding stalls
    progress first, the result is accepted when the residual is below ``accept``.
    """
    xs, ys = _symbols(2)
    vp, wp = _parse_pert(v_pert, xs), _parse_pert(w_pert, ys)
    sp_ = _Spectral(N)
    v_fn = sp.lambdify(xs, vp, modules="numpy")
    w_fn = sp.lambdify(ys, wp, modules="numpy")
    w_grad = [sp.lambdify(ys, sp.diff(wp, y), modules="numpy") for y in ys]
    X1, X2 = sp_.X1, sp_.X2
    v_grid = np.broadcast_to(np.asarray(v_fn(X1, X2), dtype=float), X1.shape)

    def residual(u, c):
        u1, u2, u11, u12, u22 = sp_.derivs(u)
        a, b, d = 1 + u11, u12, 1 + u22
        det = a * d - b * b
        if np.any(a <= 0) or np.any(det <= 0):
            return None
        y1, y2 = X1 + u1, X2 + u2
        wv = np.broadcast_to(np.asarray(w_fn(y1, y2), dtype=float), X1.shape)
        F = np.log(det) - wv + v_grid - c
        grad_w = [np.broadcast_to(np.asarray(g(y1, y2), dtype=float), X1.shape) for g in w_grad]
        return F, (d / det, -b / det, a / det), grad_w

    u = np.zeros((N, N))
    c = 0.0
    state = residual(u, c)
    # constant that makes the mean residual vanish at u = 0
    c = float(np.mean(state[0]))
    state = residual(u, c)
    norm = float(np.max(np.abs(state[0])))
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise SolverError(f"torus Newton did not converge: residual {norm:.3g} after {it} steps")
        F, (m11, m12, m22), (g1, g2) = state

        def apply(z):
            z = z.reshape(N, N)
            dc = z.mean()
            du = z - dc
            d1, d2, d11, d12, d22 = sp_.derivs(du)
            out = m11 * d11 + 2 * m12 * d12 + m22 * d22 - g1 * d1 - g2 * d2 - dc
            return out.ravel()

        def precond(r):
            r = r.reshape(N, N)
            mr = r.mean()
            return (sp_.inv_lap(r - mr) - mr).ravel()

        A = LinearOperator((N * N, N * N), matvec=apply, dtype=float)
        M = LinearOperator((N * N, N * N), matvec=precond, dtype=float)
        with np.errstate(all="ignore"):
            z, info = gmres(A, -F.ravel(), M=M, rtol=1e-10, atol=0.0, restart=60, maxiter=20)
        if info < 0 or not np.all(np.isfinite(z)):
            raise SolverError("GMRES breakdown in torus Newton step")
        z = z.reshape(N, N)
        dc = z.mean()
        du = z - dc
        t = 1.0
        while True:
            trial = residual(u + t * du, c + t * dc)
            if trial is not None:
                tnorm = float(np.max(np.abs(trial[0])))
                if not math.isfinite(tnorm):
                    trial = None
            if trial is not None:
                if tnorm < norm or t < 1e-3:
                    break
            t *= 0.5
            if t < 1e-4:
                raise SolverError("torus Newton: Hessian lost positivity and step halving failed")
        if trial is None or not tnorm < norm:
            if norm <= accept:
                break
            raise SolverError(f"torus Newton stagnated at residual {norm:.3g}")
        u, c, state, norm = u + t * du, c + t * dc, trial, tnorm
        it += 1
    u = u - u.mean()
    label = name or "torus2d"
    return TorusInstance(u, c, vp, wp, name=label, residual=norm, iterations=it)
