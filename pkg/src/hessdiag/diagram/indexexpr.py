"""Translation of diagrams into explicit index expressions.

Each internal edge is oriented from its lower to its higher vertex number;
the index is written lowered at the tail and raised at the head, so a raised
index pairs with its lowered partner through the inverse Hessian.  Free legs
are lowered.  In symmetric mode the expression is averaged over all
permutations of the free indices.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from hessdiag.diagram.core import BasicDiagram, DiagramError, DiagramSum, canonicalize

Index = Tuple[str, bool]  # (name, raised)


@dataclass(frozen=True)
class Factor:
    label: str
    indices: Tuple[Index, ...]

    def __str__(self) -> str:
        low = "".join(name for name, up in self.indices if not up)
        high = "".join(name for name, up in self.indices if up)
        out = self.label
        if low:
            out += "_{" + low + "}"
        if high:
            out += "^{" + high + "}"
        return out


@dataclass(frozen=True)
class IndexTerm:
    coefficient: Fraction
    factors: Tuple[Factor, ...]
    n_power: int = 0

    def __str__(self) -> str:
        parts = [" ".join(str(f) for f in self.factors)] if self.factors else []
        if self.n_power:
            parts.insert(0, "n" if self.n_power == 1 else f"n^{self.n_power}")
        return " ".join(parts) or "1"


@dataclass(frozen=True)
class IndexExpression:
    free: Tuple[str, ...]
    terms: Tuple[IndexTerm, ...]

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        out = []
        for t in self.terms:
            c = t.coefficient
            mag = abs(c)
            coef = "" if mag == 1 else f"({mag})*"
            sign = "-" if c < 0 else "+"
            out.append(f"{sign} {coef}{t}")
        text = " ".join(out)
        return text[2:] if text.startswith("+ ") else text

    def check_indices(self) -> None:
        """Every contraction index twice with opposite variance, free ones once lowered."""
        for t in self.terms:
            seen: Dict[str, List[bool]] = {}
            for f in t.factors:
                for name, up in f.indices:
                    seen.setdefault(name, []).append(up)
            for name, ups in seen.items():
                if name in self.free:
                    ok = ups == [False]
                else:
                    ok = sorted(ups) == [False, True]
                if not ok:
                    raise DiagramError(f"index {name!r} used inconsistently in {t}")

    def evaluate(self, lowered: Callable[[str, int], np.ndarray], h_inv: np.ndarray, n: int) -> np.ndarray:
        """Numeric value with free axes in ``self.free`` order.

        ``lowered(label, order)`` returns the fully lowered derivative array of
        the atom; every raised index is contracted with ``h_inv``.
        """
        letters = iter(string.ascii_letters)
        names: Dict[str, str] = {}

        def sym(name: str) -> str:
            if name not in names:
                names[name] = next(letters)
            return names[name]

        out_spec = "".join(sym(x) for x in self.free)
        total = np.zeros((n,) * len(self.free))
        for t in self.terms:
            operands = []
            specs = []
            for f in t.factors:
                spec = ""
                for name, up in f.indices:
                    if up:
                        tmp = name + "'"
                        spec += sym(tmp)
                        operands.append(h_inv)
                        specs.append(sym(tmp) + sym(name))
                    else:
                        spec += sym(name)
                operands.append(lowered(f.label, len(f.indices)))
                specs.append(spec)
            val = np.einsum(",".join(specs) + "->" + out_spec, *operands) if operands else np.ones(())
            total = total + float(t.coefficient) * float(n) ** t.n_power * val
        return total


def _diagram_term(d: BasicDiagram, coef: Fraction, free: Sequence[str]) -> IndexTerm:
    slots: List[List[Index]] = [[] for _ in d.vertices]
    pool = (ch for ch in "abcdefghklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ" if ch not in free)
    for (v, lab) in d.legs:
        slots[v].append((lab, False))
    for u, w in d.edges:
        name = next(pool)
        slots[u].append((name, False))
        slots[w].append((name, True))
    factors = tuple(Factor(lab, tuple(s)) for lab, s in zip(d.vertices, slots))
    return IndexTerm(coef, factors, d.n_power)


def to_index_expression(s: DiagramSum, mode: str = "auto", collect: bool = True) -> IndexExpression:
    """Index expression of a sum.

    ``mode`` is ``labeled``, ``symmetric`` or ``auto`` (taken from the sum).
    In symmetric mode the legs receive the free names i, j, k, ... and every
    permutation contributes with weight 1/L!; with ``collect`` the
    permutations giving isomorphic labeled diagrams are merged.
    """
    actual = s.mode
    if actual == "mixed":
        raise DiagramError("index expressions need a fully labeled or fully symmetric sum")
    if mode == "auto":
        mode = "symmetric" if actual == "symmetric" else "labeled"
    if mode == "labeled":
        if actual == "symmetric":
            raise DiagramError("symmetric sum requested in labeled mode")
        free = s.signature[1] if s.signature else ()
        terms = tuple(_diagram_term(d, c, free) for d, c in s)
        return IndexExpression(tuple(free), terms)
    if mode != "symmetric":
        raise ValueError(f"unknown mode {mode!r}")
    if actual == "labeled":
        raise DiagramError("labeled sum requested in symmetric mode")
    L = s.num_legs
    free = tuple("ijklmnopqrstuvwxyz"[:L])
    weight = Fraction(1, math.factorial(L))
    pairs: List[Tuple[BasicDiagram, Fraction]] = []
    for d, c in s:
        for perm in itertools.permutations(free):
            legs = tuple((v, perm[t]) for t, (v, _) in enumerate(d.legs))
            pairs.append((BasicDiagram(d.vertices, d.edges, legs, d.n_power), c * weight))
    if collect:
        acc: Dict[BasicDiagram, Fraction] = {}
        for d, c in pairs:
            cd = canonicalize(d)
            acc[cd] = acc.get(cd, Fraction(0)) + c
        pairs = [(d, c) for d, c in sorted(acc.items(), key=lambda kv: kv[0].key) if c != 0]
    return IndexExpression(free, tuple(_diagram_term(d, c, free) for d, c in pairs))
