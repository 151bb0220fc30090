"""Named closed-form expressions used by the checks and the exact assertions.

All strings are written in the DSL.  Functions returning ``DiagramSum`` build
the expressions on demand (parsing is cheap and cached sums are immutable).
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Tuple

from hessdiag.diagram.calculus import (
    contract,
    covariant_derivative,
    eliminate_loops,
    loop_template,
    weighted_laplacian,
)
from hessdiag.diagram.core import DiagramSum
from hessdiag.diagram.dsl import parse

METRIC = "Phi(i,j)"
CALABI = "Phi(i,a,b)*Phi(j,a,b)"

# Weighted Laplacian of the scalar component functions of grad Phi, D^2 Phi, D^3 Phi.
SCALAR_LAPLACIAN_D1 = "-V(i)"
SCALAR_LAPLACIAN_D2 = "-V(i,j) + W(i,j) + Phi(i,a,b)*Phi(j,a,b)"
SCALAR_LAPLACIAN_D3 = (
    "-1*V(i,j,k) + 1*W(i,j,k) + W(s,i)*Phi(s,j,k) + W(s,j)*Phi(s,i,k) + W(s,k)*Phi(s,i,j)"
    " + Phi(a,b,i)*Phi(a,b,j,k) + Phi(a,b,j)*Phi(a,b,i,k) + Phi(a,b,k)*Phi(a,b,i,j)"
    " - 2*Phi(a,b,i)*Phi(b,c,j)*Phi(c,a,k)"
)

# Tensor Laplacian of the one-form d Phi.
LAPLACIAN_DPHI = "1/2*V(i,k)*Phi(k) - 1/2*W(i,k)*Phi(k) + 1/4*Phi(i,a,b)*Phi(c,a,b)*Phi(c) - W(i)"

# Tensor Laplacian of the cubic form D^3 Phi.
LAPLACIAN_PHI3 = (
    "-V(i,a,b) + W(i,a,b)"
    " + 1/2*V(i,m)*Phi(m,a,b) + 1/2*W(i,m)*Phi(m,a,b)"
    " + 1/2*V(a,m)*Phi(m,i,b) + 1/2*W(a,m)*Phi(m,i,b)"
    " + 1/2*V(b,m)*Phi(m,i,a) + 1/2*W(b,m)*Phi(m,i,a)"
    " - 1/2*Phi(i,k,l)*Phi(a,l,m)*Phi(b,m,k)"
    " + 1/4*Phi(i,c,d)*Phi(k,c,d)*Phi(k,a,b) + 1/4*Phi(a,c,d)*Phi(k,c,d)*Phi(k,i,b)"
    " + 1/4*Phi(b,c,d)*Phi(k,c,d)*Phi(k,i,a)"
)

# R_iabc R_j^abc with R_ikjl = (1/4)(Phi_ila Phi^a_kj - Phi_ija Phi^a_kl).
RIEMANN_SQUARED = (
    "1/16*Phi(i,c,x)*Phi(x,a,b)*Phi(j,c,y)*Phi(y,a,b)"
    " - 1/16*Phi(i,c,x)*Phi(x,a,b)*Phi(j,b,y)*Phi(y,a,c)"
    " - 1/16*Phi(i,b,x)*Phi(x,a,c)*Phi(j,c,y)*Phi(y,a,b)"
    " + 1/16*Phi(i,b,x)*Phi(x,a,c)*Phi(j,b,y)*Phi(y,a,c)"
)

# L g - 2 nabla Phi . nabla Phi - 8 R.R, written out in labeled form.
LAPLACIAN_CALABI_REST = (
    "-V(i,a,b)*Phi(j,a,b) + W(i,a,b)*Phi(j,a,b) - V(j,a,b)*Phi(i,a,b) + W(j,a,b)*Phi(i,a,b)"
    " + 1/2*V(i,s)*Phi(s,a,b)*Phi(j,a,b) + 1/2*W(i,s)*Phi(s,a,b)*Phi(j,a,b)"
    " + 1/2*V(j,s)*Phi(s,a,b)*Phi(i,a,b) + 1/2*W(j,s)*Phi(s,a,b)*Phi(i,a,b)"
    " + 2*V(a,m)*Phi(m,i,b)*Phi(a,b,j) + 2*W(a,m)*Phi(m,i,b)*Phi(a,b,j)"
    " + 1/2*Phi(i,a,b)*Phi(k,a,b)*Phi(k,c,d)*Phi(j,c,d)"
)

# Figure-style symmetric presentation of the same tensor: coefficient and
# labeled representative for each of its four basic shapes (composite vertex
# labels expanded into atoms).
LAPLACIAN_CALABI_SHAPES: Tuple[Tuple[Fraction, str], ...] = (
    (Fraction(-2), "V(i,a,b)*Phi(j,a,b) - W(i,a,b)*Phi(j,a,b)"),
    (Fraction(1), "V(i,s)*Phi(s,a,b)*Phi(j,a,b) + W(i,s)*Phi(s,a,b)*Phi(j,a,b)"),
    (Fraction(2), "V(a,m)*Phi(m,i,b)*Phi(a,b,j) + W(a,m)*Phi(m,i,b)*Phi(a,b,j)"),
    (Fraction(1, 2), "Phi(i,a,b)*Phi(k,a,b)*Phi(k,c,d)*Phi(j,c,d)"),
)

# Symmetrized expression of the cubic-form Laplacian, by basic shape.
LAPLACIAN_PHI3_SHAPES: Tuple[Tuple[Fraction, str], ...] = (
    (Fraction(-1), "V(i,j,k)"),
    (Fraction(1), "W(i,j,k)"),
    (Fraction(3, 2), "V(i,m)*Phi(m,j,k)"),
    (Fraction(3, 2), "W(i,m)*Phi(m,j,k)"),
    (Fraction(3, 4), "Phi(i,c,d)*Phi(m,c,d)*Phi(m,j,k)"),
    (Fraction(-1, 2), "Phi(i,a,l)*Phi(j,l,m)*Phi(k,m,a)"),
)

# Third derivative scalar Laplacian grouped by shape: -1, 1, 3, 3, -2.
SCALAR_LAPLACIAN_D3_SHAPES: Tuple[Tuple[Fraction, str], ...] = (
    (Fraction(-1), "V(i,j,k)"),
    (Fraction(1), "W(i,j,k)"),
    (Fraction(3), "W(s,i)*Phi(s,j,k)"),
    (Fraction(3), "Phi(a,b,i)*Phi(a,b,j,k)"),
    (Fraction(-2), "Phi(a,b,i)*Phi(b,c,j)*Phi(c,a,k)"),
)


def shapes_sum(shapes) -> DiagramSum:
    total = DiagramSum.zero()
    for c, text in shapes:
        total = total + c * parse(text, symmetric=True)
    return total


@lru_cache(maxsize=None)
def nabla_phi3_squared() -> DiagramSum:
    """nabla_p Phi_iab nabla^p Phi_j^ab as a symmetric two-leg sum."""
    d = covariant_derivative(parse("Phi(i,j,k)", symmetric=True)).delabel()
    return contract(d, d, 3)


@lru_cache(maxsize=None)
def laplacian_calabi_full() -> DiagramSum:
    """Right side of the Calabi-tensor Laplacian identity, symmetric mode."""
    return parse(LAPLACIAN_CALABI_REST, symmetric=True) + 2 * nabla_phi3_squared() + 8 * parse(
        RIEMANN_SQUARED, symmetric=True
    )


def derived_loop_rule_3() -> DiagramSum:
    """The k=3 loop rule obtained by differentiating the k=2 rule.

    nabla_p of a Phi vertex with a loop and legs i, j equals the same vertex
    with an extra leg p, minus the subdivided-loop and subdivided-leg terms.
    Solving for the k=3 looped vertex and eliminating the remaining k=2 loops
    gives the rule with legs i, j, p.
    """
    rest = covariant_derivative(parse("Phi(i,j,a,a)")) - parse("Phi(i,j,p,a,a)")
    return eliminate_loops(covariant_derivative(loop_template(2)) - rest)


def exact_assertions() -> List[Tuple[str, bool, str]]:
    """The six exact diagram identities as (name, holds, detail)."""
    out = []

    d3 = parse(SCALAR_LAPLACIAN_D3, symmetric=True)
    coefs = sorted(d3.terms.values())
    ok = len(d3) == 5 and coefs == sorted(Fraction(x) for x in (-1, 1, 3, 3, -2)) and d3 == shapes_sum(
        SCALAR_LAPLACIAN_D3_SHAPES
    )
    out.append(("parse_d3", ok, f"{len(d3)} diagrams, coefficients {[str(c) for c in coefs]}"))

    der = covariant_derivative(parse("Phi(i,j,k)", symmetric=True))
    coefs = sorted(der.terms.values())
    ok = len(der) == 2 and coefs == [Fraction(-3, 2), Fraction(1)]
    out.append(("derivative_phi3", ok, f"{len(der)} diagrams, coefficients {[str(c) for c in coefs]}"))

    lphi = eliminate_loops(weighted_laplacian(parse("Phi(i)")))
    out.append(("laplacian_dphi", lphi == parse(LAPLACIAN_DPHI), str(lphi)))

    l3 = eliminate_loops(weighted_laplacian(parse("Phi(i,a,b)")))
    ok = l3 == parse(LAPLACIAN_PHI3) and l3.delabel() == shapes_sum(LAPLACIAN_PHI3_SHAPES)
    out.append(("laplacian_phi3", ok, str(l3.delabel())))

    lg = eliminate_loops(weighted_laplacian(parse(CALABI, symmetric=True)))
    rest = lg - 2 * nabla_phi3_squared() - 8 * parse(RIEMANN_SQUARED, symmetric=True)
    ok = rest == shapes_sum(LAPLACIAN_CALABI_SHAPES) and rest == parse(LAPLACIAN_CALABI_REST, symmetric=True)
    out.append(("laplacian_calabi", ok, str(rest)))

    k3 = derived_loop_rule_3()
    out.append(("loop_rule_k3", k3 == loop_template(3).relabel({"k": "p"}), str(k3)))
    return out
