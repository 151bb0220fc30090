"""Hypothesis strategies producing random well-formed DSL terms."""

from __future__ import annotations

from typing import List, Tuple

from hypothesis import strategies as st

INNER = "abcdefgh"
MAX_DEGREE = {"Phi": 5, "V": 3, "W": 3}


@st.composite
def _raw_factor_lists(draw, free: str = "ij", spare: str = "mno", max_vertices: int = 3, max_edges: int = 3) -> List[Tuple[str, List[str]]]:
    """A term as [(tensor, [indices])]: every inner index used exactly twice, free ones once."""
    nv = draw(st.integers(1, max_vertices))
    labels = [draw(st.sampled_from(["Phi", "Phi", "V", "W"])) for _ in range(nv)]
    slots: List[List[str]] = [[] for _ in range(nv)]
    for e in range(draw(st.integers(0, max_edges))):
        u = draw(st.integers(0, nv - 1))
        w = draw(st.integers(0, nv - 1))
        slots[u].append(INNER[e])
        slots[w].append(INNER[e])
    nfree = draw(st.integers(0, len(free)))
    for leg in free[:nfree]:
        slots[draw(st.integers(0, nv - 1))].append(leg)
    spare = iter(spare)
    for k in range(nv):
        if not slots[k]:
            slots[k].append(next(spare))
    return list(zip(labels, slots))


def render_factors(factors) -> str:
    return "*".join(f"{lab}({','.join(idx)})" for lab, idx in factors)


def valid(factors) -> bool:
    """Each index appears once or twice and every factor respects its degree cap."""
    counts = {}
    for lab, idx in factors:
        if len(idx) > MAX_DEGREE[lab] or not idx:
            return False
        for c in idx:
            counts[c] = counts.get(c, 0) + 1
    return all(v <= 2 for v in counts.values())


def free_indices(factors) -> List[str]:
    counts = {}
    for _, idx in factors:
        for c in idx:
            counts[c] = counts.get(c, 0) + 1
    return sorted(c for c, v in counts.items() if v == 1)


def factor_lists(**kw):
    return _raw_factor_lists(**kw).filter(valid)
