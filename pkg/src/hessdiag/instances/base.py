"""Potential triples (Phi, V, W) tied by  log det D^2 Phi = W(grad Phi) - V."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np

from hessdiag.errors import DomainError

# Tags
CONE = "cone"
KE = "KE-hyperbolic"
TRANSPORT = "transport"
MANUFACTURED = "manufactured"
QUADRATIC = "quadratic"
GRIDDED = "gridded"


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.lo)

    def contains(self, x: np.ndarray, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.array(self.lo) - margin) and np.all(x <= np.array(self.hi) + margin))

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        return lo + (hi - lo) * rng.random((count, self.n))

    def grid(self, count: int) -> np.ndarray:
        """Up to ``count`` lattice points covering the box (evenly spaced in 1D)."""
        if self.n == 1:
            return np.linspace(self.lo[0], self.hi[0], count)[:, None]
        per = max(2, int(round(count ** (1.0 / self.n))))
        axes = [np.linspace(a, b, per) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)[:count]


class PotentialInstance:
    """Derivative oracles of Phi, V (in x) and W (in y).

    ``phi(m, x)`` returns the order-m array of plain partial derivatives of
    Phi at x, shape (n,)*m; likewise ``v`` and ``w`` (the latter evaluated at
    a target point y, normally y = grad Phi(x)).
    """

    name: str = "instance"
    n: int = 1
    box: Box
    alpha: Optional[float] = None
    tags: FrozenSet[str] = frozenset()
    max_phi_order: int = 5
    max_v_order: int = 3
    max_w_order: int = 3
    constants: Dict[str, float] = {}

    def phi(self, order: int, x) -> np.ndarray:
        raise NotImplementedError

    def v(self, order: int, x) -> np.ndarray:
        raise NotImplementedError

    def w(self, order: int, y) -> np.ndarray:
        raise NotImplementedError

    # -- helpers -----------------------------------------------------------

    def _check_order(self, which: str, order: int) -> None:
        limit = {"phi": self.max_phi_order, "v": self.max_v_order, "w": self.max_w_order}[which]
        if order > limit:
            raise DomainError(f"{self.name}: {which} derivatives available up to order {limit}, requested {order}")

    def gradient_map(self, x) -> np.ndarray:
        return np.asarray(self.phi(1, x), dtype=float)

    def ma_residual(self, x) -> float:
        """log det D^2 Phi - W(grad Phi) + V at x."""
        h = self.phi(2, x)
        sign, logdet = np.linalg.slogdet(h)
        if sign <= 0:
            raise DomainError(f"{self.name}: Hessian not positive definite at {list(np.atleast_1d(x))}")
        return float(logdet - self.w(0, self.gradient_map(x)) + self.v(0, x))

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.box.sample(count, rng)

    def has_tag(self, tag: str) -> bool:
        return tag in self.tags

    def describe(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "box": [list(self.box.lo), list(self.box.hi)],
            "alpha": self.alpha,
            "tags": sorted(self.tags),
            "max_phi_order": self.max_phi_order,
            "constants": dict(self.constants),
        }

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"
