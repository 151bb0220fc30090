"""Command-line front end.

Exit codes: 0 ok, 1 check failures, 2 usage or configuration error,
3 rewrite precondition violated, 4 numeric domain or solver error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from hessdiag.diagram import calculus
from hessdiag.diagram.core import DiagramError, RewritePreconditionError
from hessdiag.diagram.dsl import DiagramSyntaxError, parse, render, to_dot
from hessdiag.diagram.indexexpr import to_index_expression
from hessdiag.errors import ConfigError, DomainError, SolverError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_REWRITE, EXIT_DOMAIN = 0, 1, 2, 3, 4


def _points(text: str) -> List[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _emit(args, result) -> None:
    print(render(result))
    if getattr(args, "dot", None):
        Path(args.dot).write_text(to_dot(result))


# -- diagram --------------------------------------------------------------------


def cmd_diagram(args) -> int:
    s = parse(args.expr, symmetric=not args.labeled)
    action = args.action
    if action == "canon":
        result = s
    elif action == "laplacian":
        result = calculus.weighted_laplacian(s)
        if args.elim:
            result = calculus.eliminate_loops(result)
    elif action == "derive":
        result = calculus.covariant_derivative(s, label=args.label)
        if args.elim:
            result = calculus.eliminate_loops(result)
    elif action == "contract":
        if not args.other:
            raise ConfigError("contract needs --with EXPR")
        other = parse(args.other, symmetric=True)
        result = calculus.contract(s.delabel(), other, args.k)
    elif action == "elim":
        rng = np.random.default_rng(args.seed) if args.seed is not None else None
        result = calculus.eliminate_loops(s, rng=rng)
    elif action == "index":
        print(to_index_expression(s))
        return EXIT_OK
    elif action == "eval":
        from hessdiag.geometry import evaluate_diagram
        from hessdiag.instances import catalog

        if not args.instance or args.at is None:
            raise ConfigError("eval needs --instance and --at")
        inst = catalog(args.instance)
        if len(args.at) != inst.n:
            raise ConfigError(f"--at has {len(args.at)} coordinates, instance dimension is {inst.n}")
        if args.elim:
            s = calculus.eliminate_loops(s)
        val = evaluate_diagram(s, inst, np.array(args.at))
        print(json.dumps(np.asarray(val.components).tolist()))
        return EXIT_OK
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown action {action}")
    _emit(args, result)
    return EXIT_OK


# -- verify ---------------------------------------------------------------------


def cmd_verify(args) -> int:
    from dataclasses import replace

    from hessdiag.verification import BOUNDS, IDENTITIES, SuiteConfig, run_suite

    cfg = SuiteConfig.load(args.config) if args.config else SuiteConfig()
    suites = ("identities", "bounds", "diagrams") if args.suite == "all" else (args.suite,)
    kw = {"suites": suites}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    if args.instance:
        kw["identity_instances"] = kw["bound_instances"] = tuple(args.instance)
    if args.id:
        kw["identity_ids"] = tuple(i for i in args.id if i in IDENTITIES)
        kw["bound_ids"] = tuple(i for i in args.id if i in BOUNDS)
        unknown = [i for i in args.id if i not in IDENTITIES and i not in BOUNDS]
        if unknown:
            raise ConfigError(f"unknown check ids {unknown}")
    if args.points is not None:
        kw["identity_points"] = kw["bound_points"] = args.points
    if args.tol is not None:
        ids = kw.get("identity_ids", cfg.identity_ids) + kw.get("bound_ids", cfg.bound_ids)
        kw["tolerances"] = {i: args.tol for i in ids}
    cfg = replace(cfg, **kw).validate()
    report = run_suite(cfg, name=args.suite)
    for c in report.checks:
        if args.verbose or c.status != "skipped":
            print(c.line())
    k = report.counts()
    print(f"{report.suite}: {k['pass']} passed, {k['fail']} failed, {k['skipped']} skipped in {report.wall_time:.1f}s")
    report.write(args.json, args.csv, args.points_csv)
    return EXIT_OK if report.ok else EXIT_FAIL


# -- solve ----------------------------------------------------------------------


def _export_transport(inst, path: Path, count: int) -> dict:
    xs = np.linspace(inst.box.lo[0], inst.box.hi[0], count)
    # phi_jet(x, 3) holds Phi', Phi'', Phi'''; Phi' is the transport map
    cols = np.array([[x, *inst.phi_jet(x, 3)] for x in xs])
    stem = path.with_suffix("")
    bin_path, json_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
    np.ascontiguousarray(cols, dtype="<f8").tofile(bin_path)
    header = {
        "name": inst.name, "n": 1, "grid": [count], "box": [float(inst.box.lo[0]), float(inst.box.hi[0])],
        "dtype": "float64", "order": "row-major", "columns": ["x", "T", "Phi2", "Phi3"],
        "source": inst.source.name, "target": inst.target.name, "data": bin_path.name,
    }
    json_path.write_text(json.dumps(header, indent=2))
    return header


def cmd_solve(args) -> int:
    if args.kind == "transport1d":
        from hessdiag.instances import solve_transport_1d

        inst = solve_transport_1d(args.source, args.target)
        xs = np.linspace(inst.box.lo[0], inst.box.hi[0], args.points)
        res = float(max(abs(inst.ma_residual([x])) for x in xs))
        p2 = [float(inst.phi(2, [x]).reshape(-1)[0]) for x in xs]
        summary = {"instance": inst.name, "points": args.points, "ma_residual": res,
                   "phi2_min": min(p2), "phi2_max": max(p2), "box": [float(inst.box.lo[0]), float(inst.box.hi[0])]}
        if args.out:
            _export_transport(inst, Path(args.out), args.points)
    else:
        from hessdiag.instances import solve_ma_torus_2d

        inst = solve_ma_torus_2d(args.vpert, args.wpert, N=args.grid)
        summary = {"instance": inst.name, "grid": args.grid, "residual": inst.residual,
                   "newton_steps": inst.iterations, "c": inst.c}
        if args.out:
            inst.export(args.out)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hessdiag", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("diagram", help="manipulate diagram sums")
    d.add_argument("action", choices=["canon", "laplacian", "derive", "contract", "elim", "index", "eval"])
    d.add_argument("--expr", required=True, help="diagram sum in the DSL, e.g. 'Phi(i,a,b)*Phi(j,a,b)'")
    d.add_argument("--labeled", action="store_true", help="keep leg labels (default: symmetric diagrams)")
    d.add_argument("--elim", action="store_true", help="eliminate loops after the rewrite")
    d.add_argument("--label", help="label of the new leg for derive (default: first unused of p, q, ...)")
    d.add_argument("--with", dest="other", help="second operand for contract")
    d.add_argument("--k", type=int, default=1, help="number of joined legs for contract")
    d.add_argument("--instance", help="catalog name for eval")
    d.add_argument("--at", type=_points, help="point for eval, comma separated")
    d.add_argument("--seed", type=int, help="random elimination order for elim")
    d.add_argument("--dot", help="write Graphviz DOT to this path")
    d.set_defaults(func=cmd_diagram)

    v = sub.add_parser("verify", help="run identity, bound and diagram checks")
    v.add_argument("suite", choices=["identities", "bounds", "diagrams", "all"])
    v.add_argument("--config", help="TOML or JSON suite configuration")
    v.add_argument("--instance", action="append", help="catalog name (repeatable)")
    v.add_argument("--id", action="append", help="check id (repeatable)")
    v.add_argument("--points", type=int)
    v.add_argument("--tol", type=float)
    v.add_argument("--seed", type=int)
    v.add_argument("--jobs", type=int)
    v.add_argument("--json", help="write the JSON report here")
    v.add_argument("--csv", help="write the CSV report here")
    v.add_argument("--points-csv", help="write per-point residuals here")
    v.add_argument("--verbose", action="store_true", help="also list skipped checks")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("solve", help="solve for a potential and export it")
    s.add_argument("kind", choices=["transport1d", "torus2d"])
    s.add_argument("--source", default="gauss", help="source density: gauss, gauss:<var>, quartic, cosine:<eps>")
    s.add_argument("--target", default="gauss", help="target density, same forms as --source")
    s.add_argument("--points", type=int, default=101, help="grid size for transport1d export and summary")
    s.add_argument("--grid", type=int, default=64, help="torus grid size N (N x N)")
    s.add_argument("--vpert", help="periodic perturbation of V in x1, x2")
    s.add_argument("--wpert", help="periodic perturbation of W in y1, y2")
    s.add_argument("--out", help="export path; writes <out>.bin and <out>.json")
    s.set_defaults(func=cmd_solve)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except DiagramSyntaxError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RewritePreconditionError as exc:
        print(f"rewrite precondition: {exc}", file=sys.stderr)
        return EXIT_REWRITE
    except (DomainError, SolverError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConfigError, DiagramError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
