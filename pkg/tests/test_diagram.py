from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hessdiag.diagram import (
    BasicDiagram,
    DiagramError,
    DiagramSum,
    DiagramSyntaxError,
    canonical_key,
    parse,
    render,
    to_dot,
    to_index_expression,
)
from strategies import factor_lists, free_indices, render_factors


def test_relabeling_dummies_gives_equal_sums():
    assert parse("Phi(i,a,b)*Phi(j,a,b)") == parse("Phi(j,c,d)*Phi(d,i,c)")


def test_collects_like_terms():
    s = parse("Phi(i,a,b)*Phi(j,a,b) + 2*Phi(j,b,a)*Phi(i,a,b) - 1/2*V(i,j)")
    assert len(s) == 2
    assert sorted(s.terms.values()) == [Fraction(-1, 2), Fraction(3)]


def test_cancellation_gives_zero():
    assert not parse("V(i,j) - V(j,i)")
    assert parse("V(i,j) - V(j,i)") == DiagramSum.zero()


def test_symmetric_mode_forgets_leg_labels():
    a = parse("V(i,m)*Phi(m,j,k)", symmetric=True)
    b = parse("V(k,m)*Phi(m,i,j)", symmetric=True)
    assert a == b
    assert a.mode == "symmetric"
    assert parse("V(i,m)*Phi(m,j,k)") != parse("V(k,m)*Phi(m,i,j)")


def test_bare_rational_is_scalar():
    s = parse("2*V(a,a) + 1/3")
    assert s.mode == "scalar"
    assert Fraction(1, 3) in s.terms.values()


def test_loop_notation():
    d, c = next(iter(parse("Phi(i,j,a,a)")))
    assert d.has_loops() and c == 1


@pytest.mark.parametrize(
    "text",
    ["Phi(i,", "X(i)", "Phi(i,i,i)", "Phi(i) + Phi(i,j)", "1/0*Phi(i)", "Phi(i) V(j)", "Phi(ij)"],
)
def test_rejects_malformed_input(text):
    with pytest.raises(DiagramError):
        parse(text)


def test_syntax_error_position():
    with pytest.raises(DiagramSyntaxError) as info:
        parse("Phi(i,j) + Q(k)")
    assert info.value.position == 11


def test_mixing_modes_raises():
    with pytest.raises(DiagramError):
        parse("Phi(i,j)", symmetric=True) + parse("Phi(i,j)")


def test_basic_diagram_validates_vertices():
    with pytest.raises(DiagramError):
        BasicDiagram(("Phi",), ((0, 1),), ())
    with pytest.raises(DiagramError):
        BasicDiagram(("Z",), (), ())


def test_render_and_dot():
    s = parse("1/2*V(i,k)*Phi(k) - W(i)")
    assert parse(render(s)) == s
    dot = to_dot(s)
    assert dot.startswith("graph") or dot.startswith("digraph")
    assert "Phi" in dot and "W" in dot


@pytest.mark.parametrize(
    "text, expected",
    [
        ("Phi(i,a,b)*Phi(j,a,b)", "Phi_{iab} Phi_{j}^{ab}"),
        ("Phi(i,j,a,a)", "Phi_{ija}^{a}"),
    ],
)
def test_index_expression(text, expected):
    assert str(to_index_expression(parse(text))) == expected


def test_index_expression_of_zero():
    assert str(to_index_expression(DiagramSum.zero())) == "0"


def _shuffle(factors, rng):
    """Reorder factors, permute slots inside each factor and rename inner indices."""
    inner = sorted({c for _, idx in factors for c in idx} - set(free_indices(factors)))
    rename = dict(zip(inner, rng.permutation(list("stuvwxyz"))[: len(inner)]))
    out = [(lab, [rename.get(c, c) for c in rng.permutation(idx)]) for lab, idx in factors]
    return [out[k] for k in rng.permutation(len(out))]


@settings(max_examples=150, deadline=None)
@given(factor_lists(), st.integers(0, 2**32 - 1))
def test_canonical_form_is_presentation_invariant(factors, seed):
    rng = np.random.default_rng(seed)
    a = parse(render_factors(factors))
    b = parse(render_factors(_shuffle(factors, rng)))
    assert a == b
    assert [canonical_key(d) for d, _ in a] == [canonical_key(d) for d, _ in b]


@settings(max_examples=150, deadline=None)
@given(st.lists(factor_lists(), min_size=1, max_size=3), st.lists(st.integers(-5, 5), min_size=3, max_size=3))
def test_render_parse_round_trip(terms, coefs):
    sig = {tuple(free_indices(f)) for f in terms}
    if len(sig) != 1:
        return
    text = " ".join(f"{'-' if c < 0 else '+'} {abs(c)}*{render_factors(f)}" for f, c in zip(terms, coefs))
    text = text.lstrip("+ ")
    s = parse(text)
    assert parse(render(s)) == s
    sym = parse(text, symmetric=True)
    assert parse(render(sym), symmetric=True) == sym
