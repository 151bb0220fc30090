"""Rewrite operations on diagram sums.

* ``contract``: the averaged symmetric contraction product of order k.
* ``covariant_derivative``: Levi-Civita derivative of the Hessian metric.
* ``weighted_laplacian``: the drift Laplacian L = Delta - (1/2)(V^k + W^k) nabla_k.
* ``eliminate_loops``: removal of Phi self-contractions using the
  differentiated Monge-Ampere equation  log det D^2 Phi = W(grad Phi) - V.

W vertices stand for derivatives of W composed with the gradient map, with
every index lowered through the Hessian.  This makes the plain vertex/edge/leg
derivative weights wrong at W vertices: each edge end sitting on a W vertex
contributes +1/2 instead of -1/2 to the weight of subdividing that edge.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hessdiag.diagram.core import (
    PHI,
    V,
    W,
    BasicDiagram,
    DiagramBuilder,
    DiagramError,
    DiagramSum,
    RewritePreconditionError,
    canonicalize,
    contract_labels,
    objects,
)
from hessdiag.diagram.dsl import parse

HALF = Fraction(1, 2)


# ---------------------------------------------------------------------------
# symmetric contraction product


def _contract_pair(d1: BasicDiagram, d2: BasicDiagram, k: int) -> List[Tuple[BasicDiagram, Fraction]]:
    L1, L2 = d1.num_legs, d2.num_legs
    if k > L1 or k > L2:
        raise DiagramError(f"cannot contract {k} legs of diagrams with {L1} and {L2} legs")
    count = math.factorial(L1) * math.factorial(L2) // (
        math.factorial(k) * math.factorial(L1 - k) * math.factorial(L2 - k)
    )
    weight = Fraction(1, count)
    off = len(d1.vertices)
    vertices = d1.vertices + d2.vertices
    base_edges = d1.edges + tuple((u + off, w + off) for u, w in d2.edges)
    legs2 = [(v + off, lab) for v, lab in d2.legs]
    out = []
    for A in itertools.combinations(range(L1), k):
        for B in itertools.permutations(range(L2), k):
            edges = base_edges + tuple((d1.legs[a][0], legs2[b][0]) for a, b in zip(A, B))
            legs = tuple(l for t, l in enumerate(d1.legs) if t not in A) + tuple(
                l for t, l in enumerate(legs2) if t not in B
            )
            out.append((BasicDiagram(vertices, edges, legs, d1.n_power + d2.n_power), weight))
    return out


def contract(s1: DiagramSum, s2: DiagramSum, k: int) -> DiagramSum:
    """Symmetric contraction product of order ``k`` of two symmetric sums."""
    if k < 1:
        raise DiagramError("contraction order must be positive")
    for s in (s1, s2):
        if s and s.mode not in ("symmetric",):
            raise DiagramError("contraction is defined for symmetric (unlabeled) sums only")
    pairs = []
    for d1, c1 in s1:
        for d2, c2 in s2:
            for d, w in _contract_pair(d1, d2, k):
                pairs.append((d, c1 * c2 * w))
    return DiagramSum.from_terms(pairs)


# ---------------------------------------------------------------------------
# covariant derivative


def _end_weight(label: str) -> Fraction:
    return HALF if label == W else -HALF


def fresh_label(d_or_s, preferred: str = "p") -> str:
    used = set(d_or_s.signature[1]) if d_or_s.signature else set()
    if preferred not in used:
        return preferred
    for ch in "pqrstuvwxyzabcdefgh":
        if ch not in used:
            return ch
    raise DiagramError("no free label left")


def derivative_terms(d: BasicDiagram, label: str) -> List[Tuple[BasicDiagram, Fraction]]:
    if label in d.labels:
        raise DiagramError(f"label {label!r} already used")
    out = []
    for obj in objects(d):
        kind, i = obj
        if kind == "vertex":
            weight = Fraction(1)
        elif kind == "edge":
            u, w = d.edges[i]
            weight = _end_weight(d.vertices[u]) + _end_weight(d.vertices[w])
        else:
            weight = _end_weight(d.vertices[d.legs[i][0]])
        if weight == 0:
            continue
        b = DiagramBuilder(d)
        b.add_leg(b.attach(obj), label)
        out.append((b.build(), weight))
    return out


def covariant_derivative(s: DiagramSum, label: Optional[str] = None) -> DiagramSum:
    """nabla_label of every term; the new leg carries ``label`` (default: first unused of p, q, ...)."""
    if label is None:
        label = fresh_label(s) if s.mode == "labeled" else "p"
    return DiagramSum.from_terms(
        (d2, c * w) for d, c in s for d2, w in derivative_terms(d, label)
    )


# ---------------------------------------------------------------------------
# weighted Laplacian


def _weight(kind: str) -> Fraction:
    return {"vertex": Fraction(1), "edge": Fraction(-1), "leg": -HALF}[kind]


def laplacian_rule_terms(d: BasicDiagram) -> List[Tuple[BasicDiagram, Fraction]]:
    """The five-rule graphical Laplacian; valid for diagrams without W vertices."""
    objs = objects(d)
    out = []
    for a, b in itertools.combinations(objs, 2):
        bld = DiagramBuilder(d)
        x = bld.attach(a)
        y = bld.attach(b)
        bld.add_edge(x, y)
        out.append((bld.build(), 2 * _weight(a[0]) * _weight(b[0])))
    for a in objs:
        bld = DiagramBuilder(d)
        x = bld.attach(a)
        bld.add_edge(x, x)
        out.append((bld.build(), _weight(a[0])))
        bld = DiagramBuilder(d)
        x = bld.attach(a)
        bld.add_edge(x, bld.add_vertex(W))
        out.append((bld.build(), -_weight(a[0])))
    for i, (u, w) in enumerate(d.edges):
        bld = DiagramBuilder(d)
        bld.edges[i] = None
        m1 = bld.add_vertex(PHI)
        m2 = bld.add_vertex(PHI)
        for e in ((u, m1), (m1, m2), (m1, m2), (m2, w)):
            bld.add_edge(*e)
        out.append((bld.build(), Fraction(2)))
    for j, (v, lab) in enumerate(d.legs):
        bld = DiagramBuilder(d)
        m1 = bld.add_vertex(PHI)
        m2 = bld.add_vertex(PHI)
        for e in ((v, m1), (m1, m2), (m1, m2)):
            bld.add_edge(*e)
        bld.legs[j] = (m2, lab)
        out.append((bld.build(), Fraction(3, 4)))
    return out


_P, _Q = "_p", "_q"


def _attach_at_leg(s: DiagramSum, label: str, atom: str) -> DiagramSum:
    def one(d: BasicDiagram) -> DiagramSum:
        bld = DiagramBuilder(d)
        j = next(t for t, (_, lab) in enumerate(d.legs) if lab == label)
        v = bld.legs[j][0]
        bld.legs[j] = None
        bld.add_edge(v, bld.add_vertex(atom))
        return DiagramSum.of(bld.build())

    return s.map_terms(one)


def laplacian_composite(s: DiagramSum) -> DiagramSum:
    """L as trace of the second covariant derivative minus the drift term."""
    dq = covariant_derivative(s, _Q)
    second = contract_labels(covariant_derivative(dq, _P), _P, _Q)
    drift = _attach_at_leg(dq, _Q, V) + _attach_at_leg(dq, _Q, W)
    return second - HALF * drift


def weighted_laplacian(s: DiagramSum) -> DiagramSum:
    """Weighted Laplacian of a sum.

    Terms without W vertices use the five graphical rules; terms containing
    W vertices go through ``laplacian_composite`` because the graphical rules
    presuppose the plain derivative weights.  Both outputs may contain Phi
    loops; apply ``eliminate_loops`` to reach the loop-free form.
    """
    if s and s.mode == "mixed":
        raise DiagramError("the Laplacian needs a fully labeled or fully symmetric sum")
    plain = DiagramSum.from_terms((d, c) for d, c in s if W not in d.vertices)
    with_w = DiagramSum.from_terms((d, c) for d, c in s if W in d.vertices)
    out = DiagramSum.from_terms(
        (d2, c * w) for d, c in plain for d2, w in laplacian_rule_terms(d)
    )
    if with_w:
        out = out + laplacian_composite(with_w)
    return out


# ---------------------------------------------------------------------------
# loop elimination

_TEMPLATES = {
    1: "-V(i) + W(i)",
    2: "Phi(i,a,b)*Phi(j,a,b) - V(i,j) + W(i,j) + Phi(i,j,a)*W(a)",
    3: (
        "Phi(i,j,a,b)*Phi(k,a,b) + Phi(i,k,a,b)*Phi(j,a,b) + Phi(j,k,a,b)*Phi(i,a,b)"
        " - 2*Phi(i,a,b)*Phi(j,b,c)*Phi(k,c,a) - V(i,j,k) + W(i,j,k)"
        " + Phi(i,j,a)*W(a,k) + Phi(i,k,a)*W(a,j) + Phi(j,k,a)*W(a,i) + Phi(i,j,k,a)*W(a)"
    ),
}
_TEMPLATE_LEGS = "ijk"


@lru_cache(maxsize=None)
def loop_template(k: int) -> DiagramSum:
    """Value of a Phi vertex carrying one loop and ``k`` further legs i, j, k."""
    if k not in _TEMPLATES:
        raise RewritePreconditionError(f"no loop rule for {k} additional edge ends (only 1..3; a bare loop is the dimension n)")
    return parse(_TEMPLATES[k])


def _looped_phi_vertices(d: BasicDiagram) -> List[int]:
    return sorted({u for u, w in d.edges if u == w and d.vertices[u] == PHI})


def _eliminate_at(d: BasicDiagram, v: int) -> List[Tuple[BasicDiagram, Fraction]]:
    """Replace one loop at Phi vertex ``v`` by the matching template."""
    ends: List[Tuple[str, object]] = []
    edges = []
    removed_loop = False
    loop_id = 0
    for u, w in d.edges:
        if u == v and w == v:
            if not removed_loop:
                removed_loop = True
                continue
            ends.append(("loop", loop_id))
            ends.append(("loop", loop_id))
            loop_id += 1
        elif u == v or w == v:
            ends.append(("edge", w if u == v else u))
        else:
            edges.append((u, w))
    legs = []
    for x, lab in d.legs:
        if x == v:
            ends.append(("leg", lab))
        else:
            legs.append((x, lab))
    k = len(ends)
    if k == 0:
        return [(_remove_vertex(d.vertices, edges, legs, v, d.n_power + 1), Fraction(1))]
    template = loop_template(k)
    out = []
    for t, c in template:
        vertices = list(d.vertices)
        new_edges = list(edges)
        new_legs = list(legs)
        base = len(vertices)
        vertices.extend(t.vertices)
        new_edges.extend((a + base, b + base) for a, b in t.edges)
        pending: Dict[int, int] = {}
        for x, lab in t.legs:
            kind, val = ends[_TEMPLATE_LEGS.index(lab)]
            if kind == "leg":
                new_legs.append((x + base, val))
            elif kind == "edge":
                new_edges.append((x + base, val))
            elif val in pending:
                new_edges.append((pending.pop(val), x + base))
            else:
                pending[val] = x + base
        out.append((_remove_vertex(tuple(vertices), new_edges, new_legs, v, d.n_power + t.n_power), c))
    return out


def _remove_vertex(vertices, edges, legs, v, n_power) -> BasicDiagram:
    def re(i):
        return i - 1 if i > v else i

    return BasicDiagram(
        tuple(vertices[:v]) + tuple(vertices[v + 1 :]),
        tuple((re(a), re(b)) for a, b in edges),
        tuple((re(a), lab) for a, lab in legs),
        n_power,
    )


def eliminate_loops(s: DiagramSum, rng: Optional[np.random.Generator] = None, max_steps: int = 100000) -> DiagramSum:
    """Rewrite until no Phi vertex carries a loop.

    The looped vertex is chosen deterministically (lowest index in canonical
    order) unless ``rng`` is given, in which case a random looped vertex is
    rewritten at each step; this is used to test confluence.
    """
    done: List[Tuple[BasicDiagram, Fraction]] = []
    work: List[Tuple[BasicDiagram, Fraction]] = list(s)
    steps = 0
    while work:
        d, c = work.pop()
        d = canonicalize(d)
        loops = _looped_phi_vertices(d)
        if not loops:
            done.append((d, c))
            continue
        steps += 1
        if steps > max_steps:
            raise DiagramError("loop elimination did not terminate")
        v = loops[0] if rng is None else loops[int(rng.integers(len(loops)))]
        for d2, c2 in _eliminate_at(d, v):
            work.append((d2, c * c2))
    return DiagramSum.from_terms(done)
