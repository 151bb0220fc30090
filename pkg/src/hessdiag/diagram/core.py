"""Basic diagrams, their canonical form, and exact linear combinations.

A basic diagram is a small multigraph whose vertices carry one of the atoms
``Phi``, ``V`` or ``W``.  Internal edges (loops allowed) are contractions
through the inverse Hessian, external legs are free tensor indices.  A leg
either carries a one-letter label (labeled mode) or none (symmetric mode, the
diagram then stands for its symmetrization over the legs).

Diagrams are immutable.  Equality of diagrams is decided on the canonical
form, which first applies path normalization (removal of degree-two ``Phi``
vertices that merely transport an index) and then picks the lexicographically
smallest encoding over all vertex numberings compatible with a colour
refinement.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

PHI = "Phi"
V = "V"
W = "W"
VERTEX_LABELS = (PHI, V, W)

Edge = Tuple[int, int]
Leg = Tuple[int, Optional[str]]
Coefficient = Union[Fraction, int, str]


class DiagramError(ValueError):
    """Invalid diagram or diagram operation."""


class RewritePreconditionError(DiagramError):
    """A rewrite rule was applied outside of its domain."""


def _leg_sort_key(leg: Leg) -> Tuple[int, str]:
    return (leg[0], leg[1] or "")


@dataclass(frozen=True)
class BasicDiagram:
    """A labeled multigraph with free legs.

    ``n_power`` counts factors of the dimension ``n`` produced by contracting a
    lone ``Phi`` loop (the trace of the identity).
    """

    vertices: Tuple[str, ...] = ()
    edges: Tuple[Edge, ...] = ()
    legs: Tuple[Leg, ...] = ()
    n_power: int = 0

    def __post_init__(self) -> None:
        nv = len(self.vertices)
        for lab in self.vertices:
            if lab not in VERTEX_LABELS:
                raise DiagramError(f"unknown vertex label {lab!r}")
        edges = []
        for u, w in self.edges:
            if not (0 <= u < nv and 0 <= w < nv):
                raise DiagramError(f"edge ({u}, {w}) refers to a missing vertex")
            edges.append((min(u, w), max(u, w)))
        for v, _ in self.legs:
            if not 0 <= v < nv:
                raise DiagramError(f"leg on missing vertex {v}")
        labels = [lab for _, lab in self.legs if lab is not None]
        if len(labels) != len(set(labels)):
            raise DiagramError(f"duplicate leg labels {sorted(labels)}")
        object.__setattr__(self, "edges", tuple(sorted(edges)))
        object.__setattr__(self, "legs", tuple(sorted(self.legs, key=_leg_sort_key)))
        deg = self.degrees()
        for v, d in enumerate(deg):
            if d == 0:
                raise DiagramError(f"vertex {v} ({self.vertices[v]}) has degree 0")

    # -- simple queries -------------------------------------------------

    def degrees(self) -> List[int]:
        deg = [0] * len(self.vertices)
        for u, w in self.edges:
            deg[u] += 1
            deg[w] += 1
        for v, _ in self.legs:
            deg[v] += 1
        return deg

    @property
    def num_legs(self) -> int:
        return len(self.legs)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(sorted(lab for _, lab in self.legs if lab is not None))

    @property
    def mode(self) -> str:
        """One of ``scalar``, ``labeled``, ``symmetric`` or ``mixed``."""
        if not self.legs:
            return "scalar"
        nlab = sum(1 for _, lab in self.legs if lab is not None)
        if nlab == len(self.legs):
            return "labeled"
        if nlab == 0:
            return "symmetric"
        return "mixed"

    @property
    def signature(self) -> Tuple[int, Tuple[str, ...]]:
        """(number of unlabeled legs, sorted labels)."""
        return (sum(1 for _, lab in self.legs if lab is None), self.labels)

    def has_loops(self) -> bool:
        return any(u == w for u, w in self.edges)

    def max_degree(self, label: str) -> int:
        deg = self.degrees()
        return max((deg[v] for v, lab in enumerate(self.vertices) if lab == label), default=0)

    # -- transformations -------------------------------------------------

    def delabel(self) -> "BasicDiagram":
        return BasicDiagram(self.vertices, self.edges, tuple((v, None) for v, _ in self.legs), self.n_power)

    def relabel(self, mapping: Mapping[str, str]) -> "BasicDiagram":
        legs = tuple((v, mapping.get(lab, lab) if lab is not None else None) for v, lab in self.legs)
        return BasicDiagram(self.vertices, self.edges, legs, self.n_power)

    def normalized(self) -> "BasicDiagram":
        return path_normalize(self)

    def canonical(self) -> "BasicDiagram":
        return canonicalize(self)

    @property
    def key(self) -> tuple:
        c = canonicalize(self)
        return (c.n_power, c.vertices, c.edges, tuple((v, lab or "") for v, lab in c.legs))

    def __str__(self) -> str:
        from hessdiag.diagram.dsl import render_term

        return render_term(self)


def disjoint_union(a: BasicDiagram, b: BasicDiagram) -> BasicDiagram:
    off = len(a.vertices)
    return BasicDiagram(
        a.vertices + b.vertices,
        a.edges + tuple((u + off, w + off) for u, w in b.edges),
        a.legs + tuple((v + off, lab) for v, lab in b.legs),
        a.n_power + b.n_power,
    )


class DiagramBuilder:
    """Mutable scratch copy of a diagram used by the rewrite rules.

    Removed edges and legs are kept as ``None`` so that indices handed out
    earlier stay valid while several objects of the same diagram are edited.
    """

    def __init__(self, d: BasicDiagram):
        self.vertices: List[str] = list(d.vertices)
        self.edges: List[Optional[Edge]] = list(d.edges)
        self.legs: List[Optional[Leg]] = list(d.legs)
        self.n_power = d.n_power

    def add_vertex(self, label: str) -> int:
        self.vertices.append(label)
        return len(self.vertices) - 1

    def add_edge(self, u: int, w: int) -> None:
        self.edges.append((u, w))

    def add_leg(self, v: int, label: Optional[str]) -> None:
        self.legs.append((v, label))

    def subdivide_edge(self, i: int) -> int:
        """Insert a new Phi vertex in the middle of internal edge ``i``."""
        u, w = self.edges[i]
        self.edges[i] = None
        m = self.add_vertex(PHI)
        self.edges.append((u, m))
        self.edges.append((m, w))
        return m

    def subdivide_leg(self, j: int) -> int:
        """Insert a new Phi vertex on leg ``j``; the leg moves to it."""
        v, lab = self.legs[j]
        m = self.add_vertex(PHI)
        self.edges.append((v, m))
        self.legs[j] = (m, lab)
        return m

    def attach(self, obj: Tuple[str, int]) -> int:
        kind, i = obj
        if kind == "vertex":
            return i
        if kind == "edge":
            return self.subdivide_edge(i)
        return self.subdivide_leg(i)

    def build(self) -> BasicDiagram:
        return BasicDiagram(
            tuple(self.vertices),
            tuple(e for e in self.edges if e is not None),
            tuple(l for l in self.legs if l is not None),
            self.n_power,
        )


def objects(d: BasicDiagram) -> List[Tuple[str, int]]:
    """Vertices, internal edges and legs as ``(kind, index)`` pairs."""
    return (
        [("vertex", i) for i in range(len(d.vertices))]
        + [("edge", i) for i in range(len(d.edges))]
        + [("leg", i) for i in range(len(d.legs))]
    )


# ---------------------------------------------------------------------------
# path normalization


def _drop_vertex(vertices, edges, legs, v):
    def re(i):
        return i - 1 if i > v else i

    return (
        vertices[:v] + vertices[v + 1 :],
        [(re(a), re(b)) for a, b in edges],
        [(re(a), lab) for a, lab in legs],
    )


def path_normalize(d: BasicDiagram) -> BasicDiagram:
    """Remove degree-two Phi vertices that only transport an index.

    A Phi vertex with two internal edge ends is replaced by a single edge, one
    with an edge end and a leg hands the leg to its neighbour, and a Phi
    vertex carrying nothing but one loop becomes a factor of ``n``.  A Phi
    vertex with two legs is the metric itself and stays.
    """
    vertices = list(d.vertices)
    edges = list(d.edges)
    legs = list(d.legs)
    n_power = d.n_power
    changed = True
    while changed:
        changed = False
        deg = [0] * len(vertices)
        for u, w in edges:
            deg[u] += 1
            deg[w] += 1
        for v, _ in legs:
            deg[v] += 1
        for v, lab in enumerate(vertices):
            if lab != PHI or deg[v] != 2:
                continue
            inc = [i for i, (a, b) in enumerate(edges) if a == v or b == v]
            my_legs = [j for j, (a, _) in enumerate(legs) if a == v]
            if len(my_legs) == 2:
                continue
            if len(inc) == 1 and edges[inc[0]] == (v, v):
                edges.pop(inc[0])
                n_power += 1
            elif len(inc) == 1:
                a, b = edges.pop(inc[0])
                other = b if a == v else a
                j = my_legs[0]
                legs[j] = (other, legs[j][1])
            else:
                e1, e2 = edges[inc[0]], edges[inc[1]]
                o1 = e1[1] if e1[0] == v else e1[0]
                o2 = e2[1] if e2[0] == v else e2[0]
                for i in sorted(inc, reverse=True):
                    edges.pop(i)
                edges.append((o1, o2))
            vertices, edges, legs = _drop_vertex(vertices, edges, legs, v)
            changed = True
            break
    return BasicDiagram(tuple(vertices), tuple(edges), tuple(legs), n_power)


# ---------------------------------------------------------------------------
# canonical form


def _refine(d: BasicDiagram) -> List[int]:
    nv = len(d.vertices)
    loops = [0] * nv
    nbrs: List[List[int]] = [[] for _ in range(nv)]
    for u, w in d.edges:
        if u == w:
            loops[u] += 1
        else:
            nbrs[u].append(w)
            nbrs[w].append(u)
    leglabs: List[List[str]] = [[] for _ in range(nv)]
    for v, lab in d.legs:
        leglabs[v].append(lab or "")
    sigs = [
        (VERTEX_LABELS.index(d.vertices[v]), loops[v], len(nbrs[v]), tuple(sorted(leglabs[v])))
        for v in range(nv)
    ]
    colors = _compress(sigs)
    while True:
        sigs2 = [(colors[v], tuple(sorted(colors[u] for u in nbrs[v]))) for v in range(nv)]
        new = _compress(sigs2)
        if len(set(new)) == len(set(colors)):
            return new
        colors = new


def _compress(sigs: Sequence) -> List[int]:
    order = {s: i for i, s in enumerate(sorted(set(sigs)))}
    return [order[s] for s in sigs]


@lru_cache(maxsize=None)
def _canonical_of_normalized(d: BasicDiagram) -> BasicDiagram:
    nv = len(d.vertices)
    if nv == 0:
        return d
    colors = _refine(d)
    classes: Dict[int, List[int]] = {}
    for v, c in enumerate(colors):
        classes.setdefault(c, []).append(v)
    ordered = [classes[c] for c in sorted(classes)]
    new_vertices = tuple(d.vertices[cls[0]] for cls in ordered for _ in cls)
    best = None
    for perms in itertools.product(*(itertools.permutations(cls) for cls in ordered)):
        pos = {}
        k = 0
        for perm in perms:
            for v in perm:
                pos[v] = k
                k += 1
        edges = tuple(sorted((min(pos[u], pos[w]), max(pos[u], pos[w])) for u, w in d.edges))
        legs = tuple(sorted((pos[v], lab or "") for v, lab in d.legs))
        enc = (edges, legs)
        if best is None or enc < best:
            best = enc
    edges, legs = best
    return BasicDiagram(new_vertices, edges, tuple((v, lab or None) for v, lab in legs), d.n_power)


def canonicalize(d: BasicDiagram) -> BasicDiagram:
    """Canonical representative of ``d`` up to isomorphism and path normalization."""
    return _canonical_of_normalized(path_normalize(d))


def canonical_key(d: BasicDiagram) -> tuple:
    return d.key


# ---------------------------------------------------------------------------
# sums


def as_fraction(c: Coefficient) -> Fraction:
    return c if isinstance(c, Fraction) else Fraction(c)


@dataclass(frozen=True)
class DiagramSum:
    """Formal linear combination of canonical basic diagrams.

    ``terms`` maps canonical diagrams to non-zero exact rationals.  Use the
    constructors :meth:`of` and :meth:`from_terms` rather than building the
    mapping by hand so that canonicalization and collection happen.
    """

    terms: Mapping[BasicDiagram, Fraction] = field(default_factory=dict)

    @staticmethod
    def of(d: BasicDiagram, coef: Coefficient = 1) -> "DiagramSum":
        return DiagramSum.from_terms([(d, coef)])

    @staticmethod
    def from_terms(pairs: Iterable[Tuple[BasicDiagram, Coefficient]]) -> "DiagramSum":
        acc: Dict[BasicDiagram, Fraction] = {}
        sig = None
        for d, c in pairs:
            c = as_fraction(c)
            if c == 0:
                continue
            cd = canonicalize(d)
            s = cd.signature
            if sig is None:
                sig = s
            elif s != sig:
                raise DiagramError(f"terms with different leg signatures {sig} and {s}")
            acc[cd] = acc.get(cd, Fraction(0)) + c
        return DiagramSum({d: c for d, c in acc.items() if c != 0})

    @staticmethod
    def zero() -> "DiagramSum":
        return DiagramSum({})

    @staticmethod
    def scalar(c: Coefficient = 1) -> "DiagramSum":
        return DiagramSum.of(BasicDiagram(), c)

    # -- container protocol ----------------------------------------------

    def __iter__(self) -> Iterator[Tuple[BasicDiagram, Fraction]]:
        return iter(sorted(self.terms.items(), key=lambda kv: kv[0].key))

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __hash__(self) -> int:
        return hash(frozenset(self.terms.items()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiagramSum):
            return NotImplemented
        return dict(self.terms) == dict(other.terms)

    def coefficient(self, d: BasicDiagram) -> Fraction:
        return self.terms.get(canonicalize(d), Fraction(0))

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other: "DiagramSum") -> "DiagramSum":
        return DiagramSum.from_terms(itertools.chain(self.terms.items(), other.terms.items()))

    def __neg__(self) -> "DiagramSum":
        return DiagramSum({d: -c for d, c in self.terms.items()})

    def __sub__(self, other: "DiagramSum") -> "DiagramSum":
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, DiagramSum):
            return juxtapose(self, other)
        c = as_fraction(other)
        if c == 0:
            return DiagramSum.zero()
        return DiagramSum({d: c * v for d, v in self.terms.items()})

    __rmul__ = __mul__

    # -- structure -----------------------------------------------------

    @property
    def signature(self) -> Optional[Tuple[int, Tuple[str, ...]]]:
        for d in self.terms:
            return d.signature
        return None

    @property
    def num_legs(self) -> int:
        for d in self.terms:
            return d.num_legs
        return 0

    @property
    def mode(self) -> str:
        modes = {d.mode for d in self.terms}
        if not modes:
            return "scalar"
        if len(modes) > 1:
            modes.discard("scalar")
        if len(modes) != 1:
            raise DiagramError(f"sum mixes modes {sorted(modes)}")
        return modes.pop()

    def delabel(self) -> "DiagramSum":
        """Forget leg labels: the symmetrization of a labeled sum."""
        return DiagramSum.from_terms((d.delabel(), c) for d, c in self.terms.items())

    def relabel(self, mapping: Mapping[str, str]) -> "DiagramSum":
        return DiagramSum.from_terms((d.relabel(mapping), c) for d, c in self.terms.items())

    def map_terms(self, fn) -> "DiagramSum":
        """Apply ``fn: BasicDiagram -> DiagramSum`` termwise, linearly."""
        pairs: List[Tuple[BasicDiagram, Fraction]] = []
        for d, c in self:
            for d2, c2 in fn(d):
                pairs.append((d2, c * c2))
        return DiagramSum.from_terms(pairs)

    def max_vertex_degree(self, label: str) -> int:
        return max((d.max_degree(label) for d in self.terms), default=0)

    def __str__(self) -> str:
        from hessdiag.diagram.dsl import render

        return render(self)

    def __repr__(self) -> str:
        return f"DiagramSum({str(self)!r})"


def juxtapose(a: DiagramSum, b: DiagramSum) -> DiagramSum:
    """Tensor product (disjoint union) of two sums; labels must not clash."""
    pairs = []
    for d1, c1 in a:
        for d2, c2 in b:
            if set(d1.labels) & set(d2.labels):
                raise DiagramError(f"juxtaposition with shared labels {set(d1.labels) & set(d2.labels)}")
            pairs.append((disjoint_union(d1, d2), c1 * c2))
    return DiagramSum.from_terms(pairs)


def contract_labels(s: DiagramSum, a: str, b: str) -> DiagramSum:
    """Join the legs labeled ``a`` and ``b`` into one internal edge."""

    def one(d: BasicDiagram) -> DiagramSum:
        ends = {lab: v for v, lab in d.legs if lab in (a, b)}
        if set(ends) != {a, b}:
            raise DiagramError(f"diagram lacks legs {a!r} and {b!r}")
        legs = tuple(l for l in d.legs if l[1] not in (a, b))
        return DiagramSum.of(BasicDiagram(d.vertices, d.edges + ((ends[a], ends[b]),), legs, d.n_power))

    return s.map_terms(one)
