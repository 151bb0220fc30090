"""One-dimensional optimal transport: the monotone map T = G^{-1} o F.

The map is anchored by CDF inversion at the source median and continued over
the sampling box (plus a margin) by integrating  T' = exp(-V(x) + W(T(x)))
with a high-order dense ODE solver, which gives a smooth T for finite
differencing.  Outward integration amplifies errors roughly like the ratio of
target to source densities, so each far tail is integrated inward instead,
starting from a CDF-inverted value at the end of the solved range.  Higher derivatives of
Phi (Phi' = T) follow from Taylor-jet recursion on  log Phi'' = -V + W(Phi')
without any differencing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import sympy as sp
from scipy import integrate, optimize

from hessdiag.errors import ConfigError, DomainError, SolverError
from hessdiag.instances.base import TRANSPORT, Box, PotentialInstance
from hessdiag.instances.symbolic import _DerivativeTable

_T = sp.Symbol("t", real=True)


@dataclass
class Density:
    """Probability density exp(-U(t) - log Z) on the real line."""

    name: str
    expr: sp.Expr
    hess_lo: float
    hess_hi: float
    third_sq: float  # sup U'''^2
    quad_coef: Optional[float] = None  # Q when U = Q t^2
    log_z: float = field(init=False)
    table: _DerivativeTable = field(init=False, repr=False)

    def __post_init__(self):
        u = sp.lambdify(_T, self.expr, modules="numpy")
        val, err = integrate.quad(lambda t: math.exp(-float(u(t))), -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=200)
        if not np.isfinite(val) or val <= 0:
            raise ConfigError(f"density {self.name!r} is not integrable")
        self.log_z = math.log(val)
        self.table = _DerivativeTable(self.expr + sp.Float(self.log_z, 17), [_T], 3)
        self._u = u

    def potential(self, order: int, t: float) -> float:
        return float(np.asarray(self.table(order, [t])).reshape(-1)[0])

    def pdf(self, t: float) -> float:
        return math.exp(-self.potential(0, t))

    def cdf(self, t: float) -> Tuple[float, float]:
        """(P[X <= t], P[X > t]) each by direct quadrature of its own tail."""
        lo, _ = integrate.quad(self.pdf, -np.inf, t, epsabs=0, epsrel=1e-13, limit=200)
        hi, _ = integrate.quad(self.pdf, t, np.inf, epsabs=0, epsrel=1e-13, limit=200)
        return lo, hi

    def quantile(self, p: float, lower: bool = True) -> float:
        """Point with lower-tail mass p (or upper-tail mass p if ``lower`` is False)."""
        a, b = -1.0, 1.0

        def f(t):
            tails = self.cdf(t)
            return tails[0] - p if lower else p - tails[1]

        while f(a) > 0:
            a *= 2
        while f(b) < 0:
            b *= 2
        return optimize.brentq(f, a, b, xtol=1e-15, rtol=1e-15, maxiter=200)

    def extent(self, level: float = 36.0) -> Tuple[float, float]:
        """Interval outside which U exceeds its minimum by ``level``."""
        res = optimize.minimize_scalar(lambda t: float(self._u(t)), bracket=(-1.0, 0.0, 1.0))
        t0, umin = float(res.x), float(res.fun)
        g = lambda t: float(self._u(t)) - umin - level
        a = t0 - 1.0
        while g(a) < 0:
            a = t0 - 2 * (t0 - a)
        b = t0 + 1.0
        while g(b) < 0:
            b = t0 + 2 * (b - t0)
        return optimize.brentq(g, a, t0), optimize.brentq(g, t0, b)


def density(spec: str) -> Density:
    """Named densities: gauss, gauss:<variance>, quartic, cosine:<eps>."""
    name, _, arg = spec.partition(":")
    t = _T
    if name == "gauss":
        var = float(arg) if arg else 1.0
        if var <= 0:
            raise ConfigError("variance must be positive")
        s2 = sp.nsimplify(var)
        return Density(spec, t**2 / (2 * s2), 1 / var, 1 / var, 0.0, quad_coef=1 / (2 * var))
    if name == "quartic":
        return Density(spec, t**4 / 4 + t**2 / 2, 1.0, math.inf, math.inf)
    if name == "cosine":
        eps = float(arg) if arg else 0.5
        if abs(eps) >= 1:
            raise ConfigError("cosine density needs |eps| < 1 for convexity")
        e = sp.nsimplify(eps)
        return Density(spec, t**2 / 2 + e * sp.cos(t), 1 - abs(eps), 1 + abs(eps), eps**2)
    raise ConfigError(f"unknown density {spec!r}")


def _jet_exp(a: np.ndarray) -> np.ndarray:
    e = np.zeros_like(a)
    e[0] = math.exp(a[0])
    for k in range(1, len(a)):
        e[k] = sum(j * a[j] * e[k - j] for j in range(1, k + 1)) / k
    return e


def _jet_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)[: len(a)]


class Transport1DInstance(PotentialInstance):
    """Brenier potential between two 1D densities."""

    def __init__(self, source: Density, target: Density, box: Optional[Box] = None, name: Optional[str] = None):
        self.source, self.target = source, target
        self.name = name or f"transport_{source.name}_to_{target.name}"
        self.n = 1
        self.alpha = None
        self.tags = frozenset({TRANSPORT})
        self.max_phi_order = 5
        self.max_v_order = 3
        self.max_w_order = 3
        self.constants = {
            "c_V": source.hess_lo, "C_V": source.hess_hi, "c_W": target.hess_lo, "C_W": target.hess_hi,
            "C": source.hess_hi, "c": target.hess_lo, "B": max(source.third_sq, target.third_sq),
        }
        if target.quad_coef is not None:
            self.constants["Q"] = target.quad_coef
        if box is None:
            box = Box((source.quantile(1e-3),), (source.quantile(1e-3, lower=False),))
        self.box = box
        self.range = source.extent()
        self.ode_range = (max(self.range[0], box.lo[0] - 0.1), min(self.range[1], box.hi[0] + 0.1))
        self._solve()

    def _solve(self) -> None:
        m = self.source.quantile(0.5)
        t_m = self.target.quantile(0.5)
        self.anchor = (m, t_m)

        def rhs(x, y):
            return [math.exp(-self.source.potential(0, x) + self.target.potential(0, y[0])), y[0]]

        lo, hi = self.ode_range
        opts = dict(method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True)
        fwd = integrate.solve_ivp(rhs, (m, hi), [t_m, 0.0], **opts)
        bwd = integrate.solve_ivp(rhs, (m, lo), [t_m, 0.0], **opts)
        if not (fwd.success and bwd.success):
            raise SolverError(f"{self.name}: ODE continuation failed")
        # (lo, hi, dense solution, offset added to the Phi component)
        self._pieces = [(m, hi, fwd.sol, 0.0), (lo, m, bwd.sol, 0.0)]
        # Tails: integrate inward from a quantile-inverted endpoint, where the
        # flow contracts errors instead of amplifying them.
        for end, edge in ((self.range[1], hi), (self.range[0], lo)):
            if abs(end - edge) < 1e-12:
                continue
            tail = integrate.solve_ivp(rhs, (end, edge), [self.transport_by_quantiles(end), 0.0], **opts)
            if not tail.success:
                raise SolverError(f"{self.name}: tail integration failed")
            core = fwd.sol if edge == hi else bwd.sol
            offset = float(core(edge)[1] - tail.sol(edge)[1])
            self._pieces.append((min(end, edge), max(end, edge), tail.sol, offset))

    def _state(self, x: float) -> np.ndarray:
        for a, b, sol, offset in self._pieces:
            if a <= x <= b:
                y = np.array(sol(x), dtype=float)
                y[1] += offset
                return y
        raise DomainError(f"{self.name}: x = {x} outside solved range [{self.range[0]:.3g}, {self.range[1]:.3g}]")

    def transport(self, x: float) -> float:
        return float(self._state(x)[0])

    def transport_by_quantiles(self, x: float) -> float:
        """G^{-1}(F(x)) using whichever tail is smaller; independent of the ODE."""
        lower, upper = self.source.cdf(x)
        if lower <= upper:
            return self.target.quantile(lower, lower=True)
        return self.target.quantile(upper, lower=False)

    def phi_jet(self, x: float, order: int) -> np.ndarray:
        """Derivatives Phi^(1..order)(x)."""
        t0 = self.transport(x)
        m = order - 1  # Taylor coefficients t_0 .. t_m of T
        vj = np.array([self.source.potential(j, x) / math.factorial(j) for j in range(max(m, 1))])
        wj = np.array([self.target.potential(j, t0) / math.factorial(j) for j in range(max(m, 1))])
        t = np.zeros(m + 1)
        t[0] = t0
        for K in range(1, m + 1):
            size = K  # orders 0..K-1 of ell
            u = t[:size].copy()
            u[0] = 0.0
            comp = np.zeros(size)
            power = np.zeros(size)
            power[0] = 1.0
            for j in range(size):
                comp += wj[j] * power
                power = _jet_mul(power, u)
            ell = -vj[:size] + comp
            e = _jet_exp(ell)
            t[K] = e[K - 1] / K
        return np.array([t[k] * math.factorial(k) for k in range(m + 1)])

    def phi(self, order, x):
        self._check_order("phi", order)
        x = float(np.atleast_1d(x)[0])
        if order == 0:
            return np.asarray(float(self._state(x)[1]))
        return np.asarray(self.phi_jet(x, order)[order - 1]).reshape((1,) * order)

    def v(self, order, x):
        self._check_order("v", order)
        x = float(np.atleast_1d(x)[0])
        return np.asarray(self.source.potential(order, x)).reshape((1,) * order)

    def w(self, order, y):
        self._check_order("w", order)
        y = float(np.atleast_1d(y)[0])
        return np.asarray(self.target.potential(order, y)).reshape((1,) * order)


def solve_transport_1d(source: str, target: str, box: Optional[Box] = None) -> Transport1DInstance:
    return Transport1DInstance(density(source), density(target), box=box)


def perturbed_gauss_1d(eps: float = 0.5) -> Transport1DInstance:
    """Source exp(-x^2/2 - eps cos x), target standard Gaussian."""
    inst = Transport1DInstance(density(f"cosine:{eps:g}"), density("gauss"))
    inst.name = f"perturbed_gauss_1d_e{eps:g}"
    return inst


def legendre_dual_1d(inst: PotentialInstance, points: int = 50) -> Dict[str, float]:
    """Invert Phi' on the sampling box and report max |Phi'(Psi'(y)) - y|."""
    if inst.n != 1:
        raise ConfigError("legendre_dual_1d needs a 1D instance")
    lo, hi = inst.box.lo[0], inst.box.hi[0]
    xs = np.linspace(lo, hi, points)
    ts = np.array([float(inst.phi(1, [x])[0]) for x in xs])
    if np.any(np.diff(ts) <= 0):
        raise SolverError(f"{inst.name}: Phi' is not increasing on the sample")
    worst = 0.0
    inverse = []
    for y in ts[1:-1]:
        x = optimize.brentq(lambda s: float(inst.phi(1, [s])[0]) - y, lo, hi, xtol=1e-15, rtol=1e-15)
        inverse.append(x)
        worst = max(worst, abs(float(inst.phi(1, [x])[0]) - y))
    return {"max_residual": worst, "points": len(inverse), "y": ts[1:-1].tolist(), "psi_prime": inverse}
