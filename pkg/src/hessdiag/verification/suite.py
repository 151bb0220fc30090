"""Suite configuration and execution."""

from __future__ import annotations

import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from hessdiag.diagram import library
from hessdiag.errors import ConfigError, DomainError
from hessdiag.instances import catalog, instance_from_spec, load_config
from hessdiag.instances.base import PotentialInstance
from hessdiag.verification.bounds import BOUNDS, check_bound
from hessdiag.verification.identities import IDENTITIES, check_identity
from hessdiag.verification.report import FAIL, PASS, CheckResult, Report

SUITES = ("identities", "bounds", "diagrams")
MA_TOL = 1e-10

InstanceRef = Union[str, Mapping[str, Any]]

DEFAULT_IDENTITY_INSTANCES = ("quadratic_id2", "manufactured2", "orthant2", "sine1d")
DEFAULT_BOUND_INSTANCES = (
    "orthant2", "sine1d", "gauss_pair_1d", "transport:gauss:quartic", "perturbed_gauss_1d",
)


@dataclass
class SuiteConfig:
    suites: Tuple[str, ...] = SUITES
    identity_instances: Tuple[InstanceRef, ...] = DEFAULT_IDENTITY_INSTANCES
    bound_instances: Tuple[InstanceRef, ...] = DEFAULT_BOUND_INSTANCES
    identity_ids: Tuple[str, ...] = tuple(IDENTITIES)
    bound_ids: Tuple[str, ...] = tuple(BOUNDS)
    identity_points: int = 20
    bound_points: int = 50
    seed: int = 42
    jobs: int = 1
    tolerances: Dict[str, float] = field(default_factory=dict)

    def validate(self) -> "SuiteConfig":
        for s in self.suites:
            if s not in SUITES:
                raise ConfigError(f"unknown suite {s!r}; expected one of {SUITES}")
        for i in self.identity_ids:
            if i not in IDENTITIES:
                raise ConfigError(f"unknown identity id {i!r}")
        for i in self.bound_ids:
            if i not in BOUNDS:
                raise ConfigError(f"unknown bound id {i!r}")
        for k in self.tolerances:
            if k not in IDENTITIES and k not in BOUNDS:
                raise ConfigError(f"tolerance given for unknown check {k!r}")
        if self.identity_points < 1 or self.bound_points < 1:
            raise ConfigError("point counts must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SuiteConfig":
        cfg = cls()
        kw: Dict[str, Any] = {}
        if "suites" in data:
            kw["suites"] = tuple(data["suites"])
        for key in ("seed", "jobs"):
            if key in data:
                kw[key] = int(data[key])
        ident = data.get("identities", {})
        bnd = data.get("bounds", {})
        if "instances" in data:
            kw["identity_instances"] = kw["bound_instances"] = tuple(data["instances"])
        if "instances" in ident:
            kw["identity_instances"] = tuple(ident["instances"])
        if "ids" in ident:
            kw["identity_ids"] = tuple(ident["ids"])
        if "points" in ident:
            kw["identity_points"] = int(ident["points"])
        if "instances" in bnd:
            kw["bound_instances"] = tuple(bnd["instances"])
        if "ids" in bnd:
            kw["bound_ids"] = tuple(bnd["ids"])
        if "points" in bnd:
            kw["bound_points"] = int(bnd["points"])
        if "tolerances" in data:
            kw["tolerances"] = {str(k): float(v) for k, v in data["tolerances"].items()}
        unknown = set(data) - {"suites", "seed", "jobs", "identities", "bounds", "instances", "tolerances"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return replace(cfg, **kw).validate()

    @classmethod
    def load(cls, path) -> "SuiteConfig":
        return cls.from_mapping(load_config(path))


def _ref_key(ref: InstanceRef) -> str:
    if isinstance(ref, str):
        return ref
    return repr(sorted((k, repr(v)) for k, v in ref.items()))


def build_instance(ref: InstanceRef) -> PotentialInstance:
    if isinstance(ref, str):
        return catalog(ref)
    return instance_from_spec(ref)


def sample_points(inst: PotentialInstance, count: int, seed: int, suite: str) -> np.ndarray:
    """Deterministic per-instance sample, independent of scheduling."""
    rng = np.random.default_rng([seed, zlib.crc32(inst.name.encode()), zlib.crc32(suite.encode())])
    return inst.sample(count, rng)


def admission(inst: PotentialInstance, points: Sequence[np.ndarray]) -> Optional[str]:
    """Reason to reject the instance (Monge-Ampere residual or Hessian), or None."""
    worst = 0.0
    for x in points:
        try:
            worst = max(worst, abs(inst.ma_residual(x)))
        except DomainError as exc:
            return str(exc)
    if not worst <= MA_TOL:
        return f"Monge-Ampere residual {worst:.3e} exceeds {MA_TOL:g}"
    return None


def diagram_results() -> List[CheckResult]:
    out = []
    for name, ok, detail in library.exact_assertions():
        out.append(CheckResult(name, "-", 1, 0.0 if ok else 1.0, [], 0.0, PASS if ok else FAIL,
                               "exact rational equality" if ok else f"mismatch: {detail}", "diagrams"))
    return out


def run_suite(config: Optional[SuiteConfig] = None, name: Optional[str] = None) -> Report:
    """Run the configured suites; check failures are recorded, not raised."""
    cfg = (config or SuiteConfig()).validate()
    t0 = time.perf_counter()
    refs: Dict[str, InstanceRef] = {}
    if "identities" in cfg.suites:
        for r in cfg.identity_instances:
            refs.setdefault(_ref_key(r), r)
    if "bounds" in cfg.suites:
        for r in cfg.bound_instances:
            refs.setdefault(_ref_key(r), r)

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        built = dict(zip(refs, pool.map(build_instance, refs.values())))

        jobs = []
        for suite, ids, insts, count, fn in (
            ("identities", cfg.identity_ids, cfg.identity_instances, cfg.identity_points, check_identity),
            ("bounds", cfg.bound_ids, cfg.bound_instances, cfg.bound_points, check_bound),
        ):
            if suite not in cfg.suites:
                continue
            for ref in insts:
                inst = built[_ref_key(ref)]
                pts = sample_points(inst, count, cfg.seed, suite)
                reason = admission(inst, pts)
                for cid in ids:
                    jobs.append((fn, cid, inst, pts, cfg.tolerances.get(cid), reason, suite))

        def run(job):
            fn, cid, inst, pts, tol, reason, suite = job
            if reason is not None:
                spec = IDENTITIES.get(cid) or BOUNDS[cid]
                return CheckResult(cid, inst.name, 0, float("inf"), [], tol or spec.tolerance, FAIL,
                                   f"instance not admitted: {reason}", suite)
            return fn(cid, inst, pts, tol)

        checks = list(pool.map(run, jobs))
    if "diagrams" in cfg.suites:
        checks.extend(diagram_results())
    label = name or ("all" if set(cfg.suites) == set(SUITES) else "+".join(cfg.suites))
    instances = [built[k].name for k in refs]
    return Report(label, cfg.seed, instances, checks, time.perf_counter() - t0)
