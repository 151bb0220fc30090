"""Textual index notation for diagram sums.

Grammar (whitespace is insignificant)::

    expr     := term (('+' | '-') term)*
    term     := [rational '*'] factor ('*' factor)* | rational
    factor   := ('Phi' | 'V' | 'W') '(' index (',' index)* ')'
    index    := single ASCII letter
    rational := integer ['/' positive-integer]

An index used twice within a term is a contraction (an internal edge, or a
loop when both uses sit in the same factor); an index used once is a free
leg.  A bare rational is the constant scalar diagram.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from hessdiag.diagram.core import (
    PHI,
    BasicDiagram,
    DiagramError,
    DiagramSum,
)


class DiagramSyntaxError(DiagramError):
    """Malformed DSL input; ``position`` is the 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z]+)|(?P<op>[-+*/(),]))")


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> List[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DiagramSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self, kind: str, text: Optional[str] = None) -> _Tok:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text or "end of input"
            raise DiagramSyntaxError(f"expected {want!r}, got {got!r}", t.pos)
        self.i += 1
        return t

    def at_op(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "op" and t.text == text

    def expr(self) -> List[Tuple[Fraction, BasicDiagram]]:
        terms = []
        sign = 1
        if self.at_op("-") or self.at_op("+"):
            sign = -1 if self.take("op").text == "-" else 1
        terms.append(self.term(sign))
        while self.at_op("+") or self.at_op("-"):
            sign = -1 if self.take("op").text == "-" else 1
            terms.append(self.term(sign))
        t = self.peek()
        if t.kind != "end":
            raise DiagramSyntaxError(f"unexpected {t.text!r}", t.pos)
        return terms

    def rational(self) -> Fraction:
        num = int(self.take("num").text)
        if self.at_op("/"):
            self.take("op", "/")
            t = self.take("num")
            den = int(t.text)
            if den == 0:
                raise DiagramSyntaxError("zero denominator", t.pos)
            return Fraction(num, den)
        return Fraction(num)

    def term(self, sign: int) -> Tuple[Fraction, BasicDiagram]:
        start = self.peek().pos
        coef = Fraction(sign)
        factors: List[Tuple[str, List[Tuple[str, int]]]] = []
        if self.peek().kind == "num":
            coef *= self.rational()
            if not self.at_op("*"):
                return coef, BasicDiagram()
            self.take("op", "*")
        factors.append(self.factor())
        while self.at_op("*"):
            self.take("op", "*")
            factors.append(self.factor())
        return coef, _build_term(factors, start)

    def factor(self) -> Tuple[str, List[Tuple[str, int]]]:
        t = self.take("name")
        if t.text not in ("Phi", "V", "W"):
            raise DiagramSyntaxError(f"unknown tensor {t.text!r}", t.pos)
        self.take("op", "(")
        idx = [self.index()]
        while self.at_op(","):
            self.take("op", ",")
            idx.append(self.index())
        self.take("op", ")")
        return t.text, idx

    def index(self) -> Tuple[str, int]:
        t = self.take("name")
        if len(t.text) != 1:
            raise DiagramSyntaxError(f"index must be a single letter, got {t.text!r}", t.pos)
        return t.text, t.pos


def _build_term(factors, start: int) -> BasicDiagram:
    uses: Dict[str, List[int]] = {}
    for v, (_, idx) in enumerate(factors):
        for name, pos in idx:
            uses.setdefault(name, []).append(v)
            if len(uses[name]) > 2:
                raise DiagramSyntaxError(f"index {name!r} appears more than twice in one term", pos)
    edges = []
    legs = []
    for name, vs in uses.items():
        if len(vs) == 2:
            edges.append((vs[0], vs[1]))
        else:
            legs.append((vs[0], name))
    return BasicDiagram(tuple(lab for lab, _ in factors), tuple(edges), tuple(legs))


def parse(text: str, symmetric: bool = False) -> DiagramSum:
    """Parse DSL text into a collected sum.

    With ``symmetric=True`` the free indices are forgotten after parsing, so
    the result is the symmetrization of the written tensor.
    """
    pairs = _Parser(text).expr()
    sigs = {d.labels for _, d in pairs}
    if len(sigs) > 1:
        raise DiagramError(f"terms have different free indices: {sorted(sigs)}")
    s = DiagramSum.from_terms((d, c) for c, d in pairs)
    return s.delabel() if symmetric else s


# ---------------------------------------------------------------------------
# rendering

_LEG_POOL = "ijklmnopqrstuvwxyz" + "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
_INNER_POOL = "abcdefgh" + "ABCDEFGHIJKLMNOPQRSTUVWXYZ" + "tuvwxyz"


def _format_coef(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def render_term(d: BasicDiagram) -> str:
    """Render one diagram as a product of factors (no coefficient)."""
    used = set(d.labels)
    leg_pool = (ch for ch in _LEG_POOL if ch not in used)
    slots: List[List[str]] = [[] for _ in d.vertices]
    for v, lab in d.legs:
        slots[v].append(lab if lab is not None else next(leg_pool))
    used |= {x for s in slots for x in s}
    inner = (ch for ch in _INNER_POOL if ch not in used)
    for u, w in d.edges:
        name = next(inner)
        slots[u].append(name)
        slots[w].append(name)
    parts = [f"{lab}({','.join(sorted(s))})" for lab, s in zip(d.vertices, slots)]
    parts += [f"{PHI}({x},{x})" for x in [next(inner) for _ in range(d.n_power)]]
    return "*".join(parts)


def render(s: DiagramSum) -> str:
    """DSL text for a sum; ``parse`` of the text gives back the sum."""
    if not s:
        return "0"
    out = []
    for d, c in s:
        body = render_term(d)
        mag = abs(c)
        if not body:
            text = _format_coef(mag)
        elif mag == 1:
            text = body
        else:
            text = f"{_format_coef(mag)}*{body}"
        if not out:
            out.append(text if c > 0 else f"-{text}")
        else:
            out.append(f"+ {text}" if c > 0 else f"- {text}")
    return " ".join(out)


def to_dot(s: DiagramSum, name: str = "diagrams") -> str:
    """Graphviz DOT text drawing every term of the sum as a cluster."""
    lines = [f"graph {name} {{", "  node [shape=circle];"]
    for t, (d, c) in enumerate(s):
        lines.append(f"  subgraph cluster_{t} {{")
        lines.append(f'    label="{_format_coef(c)}";')
        for v, lab in enumerate(d.vertices):
            lines.append(f'    t{t}v{v} [label="{lab}"];')
        for u, w in d.edges:
            lines.append(f"    t{t}v{u} -- t{t}v{w};")
        for j, (v, lab) in enumerate(d.legs):
            lines.append(f'    t{t}l{j} [shape=plaintext, label="{lab or ""}"];')
            lines.append(f"    t{t}v{v} -- t{t}l{j};")
        if d.n_power:
            lines.append(f'    t{t}n [shape=plaintext, label="n^{d.n_power}"];')
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
