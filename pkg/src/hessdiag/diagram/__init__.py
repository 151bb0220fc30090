"""Symbolic tensor diagrams: representation, DSL, rewrite calculus and index form."""

from hessdiag.diagram.calculus import (
    contract,
    covariant_derivative,
    eliminate_loops,
    loop_template,
    weighted_laplacian,
)
from hessdiag.diagram.core import (
    PHI,
    V,
    W,
    BasicDiagram,
    DiagramBuilder,
    DiagramError,
    DiagramSum,
    RewritePreconditionError,
    canonical_key,
    canonicalize,
)
from hessdiag.diagram.dsl import DiagramSyntaxError, parse, render, to_dot
from hessdiag.diagram.indexexpr import IndexExpression, to_index_expression

__all__ = [
    "PHI", "V", "W", "BasicDiagram", "DiagramBuilder", "DiagramError", "DiagramSum", "DiagramSyntaxError",
    "IndexExpression", "RewritePreconditionError", "canonical_key", "canonicalize", "contract",
    "covariant_derivative", "eliminate_loops", "loop_template", "parse", "render", "to_dot",
    "to_index_expression", "weighted_laplacian",
]
