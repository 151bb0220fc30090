"""Check results and aggregated reports with deterministic serialization."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"
COLUMNS = ("id", "instance", "points", "max_abs_residual", "worst_point", "tolerance", "status", "notes")


@dataclass
class CheckResult:
    id: str
    instance: str
    points: int
    max_abs_residual: float
    worst_point: List[float]
    tolerance: float
    status: str
    notes: str = ""
    suite: str = ""
    samples: List[Tuple[Tuple[float, ...], float]] = field(default_factory=list, repr=False)

    @classmethod
    def from_samples(cls, id, instance, samples, tolerance, notes="", suite=""):
        """Status is pass iff the largest sample residual is within tolerance."""
        if not samples:
            return cls.skipped(id, instance, "no sample points", suite)
        samples = [(tuple(float(t) for t in pt), float(r) if r == r else float("inf")) for pt, r in samples]
        worst_pt, worst = max(samples, key=lambda s: s[1])
        status = PASS if worst <= tolerance else FAIL
        return cls(id, instance, len(samples), float(worst), list(worst_pt), tolerance, status, notes, suite, samples)

    @classmethod
    def skipped(cls, id, instance, reason, suite="", tolerance=0.0):
        return cls(id, instance, 0, 0.0, [], tolerance, SKIPPED, reason, suite)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> Dict[str, object]:
        return {
            "id": self.id,
            "instance": self.instance,
            "points": self.points,
            "max_abs_residual": self.max_abs_residual if math.isfinite(self.max_abs_residual) else None,
            "worst_point": [float(t) for t in self.worst_point],
            "tolerance": self.tolerance,
            "status": self.status,
            "notes": self.notes,
        }

    def line(self) -> str:
        return (f"[{self.status.upper():7s}] {self.id:16s} {self.instance:28s} "
                f"n={self.points:4d} residual={self.max_abs_residual:.3e} tol={self.tolerance:.1e}")


def build_stamp() -> str:
    """Package version plus a digest of the package sources."""
    from hessdiag import __version__

    root = Path(__file__).resolve().parent.parent
    digest = hashlib.sha1()
    for path in sorted(root.rglob("*.py")):
        digest.update(path.relative_to(root).as_posix().encode())
        digest.update(path.read_bytes())
    return f"{__version__}+{digest.hexdigest()[:10]}"


@dataclass
class Report:
    suite: str
    seed: int
    instances: List[str]
    checks: List[CheckResult]
    wall_time: float = 0.0
    build: str = field(default_factory=build_stamp)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if c.status == FAIL]

    @property
    def ok(self) -> bool:
        return not self.failures

    def counts(self) -> Dict[str, int]:
        out = {PASS: 0, FAIL: 0, SKIPPED: 0}
        for c in self.checks:
            out[c.status] += 1
        return out

    def to_dict(self, include_time: bool = True) -> Dict[str, object]:
        d = {
            "suite": self.suite,
            "seed": self.seed,
            "build": self.build,
            "instances": list(self.instances),
            "checks": [c.to_dict() for c in self.checks],
        }
        if include_time:
            d["wall_time"] = round(self.wall_time, 3)
        return d

    def to_json(self, include_time: bool = True) -> str:
        return json.dumps(self.to_dict(include_time), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for c in self.checks:
            d = c.to_dict()
            d["worst_point"] = " ".join(repr(t) for t in d["worst_point"])
            w.writerow([d[k] for k in COLUMNS])
        return buf.getvalue()

    def points_csv(self) -> str:
        """One row per (check, instance, point) with the residual at that point."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("id", "instance", "point", "residual"))
        for c in self.checks:
            for pt, r in c.samples:
                w.writerow((c.id, c.instance, " ".join(repr(float(t)) for t in pt), repr(float(r))))
        return buf.getvalue()

    def summary(self) -> str:
        lines = [c.line() for c in self.checks]
        k = self.counts()
        lines.append(f"{self.suite}: {k[PASS]} passed, {k[FAIL]} failed, {k[SKIPPED]} skipped "
                     f"in {self.wall_time:.1f}s")
        return "\n".join(lines)

    def write(self, json_path: Optional[str] = None, csv_path: Optional[str] = None,
              points_path: Optional[str] = None) -> None:
        if json_path:
            Path(json_path).write_text(self.to_json())
        if csv_path:
            Path(csv_path).write_text(self.to_csv())
        if points_path:
            Path(points_path).write_text(self.points_csv())
