"""Instance catalog: closed forms, manufactured solutions and solved transport problems."""

from __future__ import annotations

import json
import re
import sys
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from hessdiag.errors import ConfigError
from hessdiag.instances.base import (
    CONE,
    GRIDDED,
    KE,
    MANUFACTURED,
    QUADRATIC,
    TRANSPORT,
    Box,
    PotentialInstance,
)
from hessdiag.instances.symbolic import gauss_pair_1d, manufactured, orthant, quadratic_id, sine1d
from hessdiag.instances.torus import TorusInstance, load_torus, solve_ma_torus_2d
from hessdiag.instances.transport1d import (
    Transport1DInstance,
    legendre_dual_1d,
    perturbed_gauss_1d,
    solve_transport_1d,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "CONE", "GRIDDED", "KE", "MANUFACTURED", "QUADRATIC", "TRANSPORT",
    "Box", "PotentialInstance", "TorusInstance", "Transport1DInstance",
    "catalog", "instance_from_spec", "load_instance_specs", "gauss_pair_1d", "legendre_dual_1d",
    "load_torus", "manufactured", "orthant", "perturbed_gauss_1d", "quadratic_id", "sine1d",
    "solve_ma_torus_2d", "solve_transport_1d",
]


def _transport(source: str = "gauss", target: str = "gauss", **kw):
    return solve_transport_1d(source, target, **kw)


def _torus(vpert: Optional[str] = None, wpert: Optional[str] = None, grid: int = 64, **kw):
    return solve_ma_torus_2d(vpert, wpert, N=grid, **kw)


_FACTORIES = {
    "quadratic_id": (quadratic_id, "n"),
    "orthant": (orthant, "n"),
    "sine1d": (sine1d, "a"),
    "gauss_pair_1d": (gauss_pair_1d, "sigma"),
    "perturbed_gauss_1d": (perturbed_gauss_1d, "eps"),
    "manufactured": (manufactured, "n"),
    "transport": (_transport, None),
    "torus2d": (_torus, None),
}


def catalog(name: str, **params: Any) -> PotentialInstance:
    """Build an instance by name.

    Accepted names: quadratic_id, orthant, sine1d, gauss_pair_1d,
    perturbed_gauss_1d, manufactured, transport, torus2d.  A trailing integer
    sets the dimension ("orthant3"), and "transport:<source>:<target>" names a
    1D transport problem between two named densities.
    """
    if name.startswith("transport:"):
        parts = name.split(":")
        if len(parts) < 3:
            raise ConfigError("transport names look like transport:<source>:<target>")
        # density specs may contain their own ':' argument, e.g. cosine:0.5
        body = name[len("transport:"):]
        source, target = _split_densities(body)
        return _transport(source, target, **params)
    if name not in _FACTORIES:
        m = re.fullmatch(r"([a-z_]+?)(\d+)", name)
        if m and m.group(1) in ("quadratic_id", "orthant", "manufactured"):
            params.setdefault("n", int(m.group(2)))
            name = m.group(1)
        else:
            raise ConfigError(f"unknown instance {name!r}; known: {sorted(_FACTORIES)}")
    factory, _ = _FACTORIES[name]
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}") from exc


def _split_densities(body: str):
    names = ("gauss", "quartic", "cosine")
    tokens = body.split(":")
    for cut in range(1, len(tokens)):
        left, right = ":".join(tokens[:cut]), ":".join(tokens[cut:])
        if left.split(":")[0] in names and right.split(":")[0] in names:
            return left, right
    raise ConfigError(f"cannot split {body!r} into source and target densities")


def instance_from_spec(spec: Mapping[str, Any]) -> PotentialInstance:
    """Instance from a mapping {name, params, box, grid}."""
    if "name" not in spec:
        raise ConfigError("instance spec needs a name")
    params = dict(spec.get("params", {}))
    if "grid" in spec:
        params["grid"] = int(spec["grid"])
    inst = catalog(str(spec["name"]), **params)
    if "box" in spec:
        lo, hi = spec["box"]
        box = Box(tuple(float(t) for t in lo), tuple(float(t) for t in hi))
        if box.n != inst.n:
            raise ConfigError(f"box dimension {box.n} does not match instance dimension {inst.n}")
        inst.box = box
    return inst


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a TOML or JSON file into a dict."""
    path = Path(path)
    text = path.read_bytes()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def load_instance_specs(path: Union[str, Path]):
    """Instances listed under [[instances]] (or a top-level list in JSON)."""
    data = load_config(path)
    items = data if isinstance(data, list) else data.get("instances", [])
    return [instance_from_spec(item) for item in items]
