"""Check records and report serialization (JSON with stable key order, or a text table)."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"
SCHEMA = 1

_OPTIONAL = ("slope", "residuals", "epsilons", "limit_estimate", "max_residual", "expression", "details")


def _clean(v):
    """JSON-safe, deterministic representation (floats rounded to 12 significant digits)."""
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(f"{v:.12g}")
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


@dataclass
class Check:
    name: str
    status: str
    slope: float | None = None
    residuals: list | None = None
    epsilons: list | None = None
    limit_estimate: float | None = None
    max_residual: float | None = None
    expression: object | None = None
    details: dict | None = None

    def __post_init__(self):
        if self.status not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"bad status {self.status!r}")

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_record(self) -> dict:
        rec = {"name": self.name, "status": self.status}
        for k in _OPTIONAL:
            v = getattr(self, k)
            if v is not None:
                rec[k] = _clean(v)
        return rec


def status_of(ok: bool) -> str:
    return PASS if ok else FAIL


@dataclass
class Report:
    input_digest: str
    seed: int
    checks: list = field(default_factory=list)
    version: str = __version__

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, checks) -> None:
        self.checks.extend(checks)

    @property
    def failed(self) -> list:
        return [c for c in self.checks if c.status == FAIL]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0

    def by_name(self) -> dict:
        return {c.name: c for c in self.checks}

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "input_digest": self.input_digest,
            "seed": self.seed,
            "checks": [c.to_record() for c in self.checks],
            "schema": SCHEMA,
        }


def digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if not isinstance(p, str):
            p = json.dumps(_clean(p), sort_keys=True)
        h.update(p.encode())
        h.update(b"\0")
    return h.hexdigest()


def emit_report(r: Report, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(r.to_dict(), indent=2) + "\n").encode()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = [f"weaksym {r.version}  seed {r.seed}  input {r.input_digest[:12]}"]
    width = max([len(c.name) for c in r.checks] + [5])
    for c in r.checks:
        ev = []
        if c.slope is not None:
            ev.append(f"slope={_short(c.slope)}")
        if c.limit_estimate is not None:
            ev.append(f"limit={_short(c.limit_estimate)}")
        if c.max_residual is not None:
            ev.append(f"max_residual={_short(c.max_residual)}")
        lines.append(f"{c.name:<{width}}  {c.status.upper():<12}  {' '.join(ev)}".rstrip())
    n_pass = sum(c.passed for c in r.checks)
    lines.append(f"{n_pass}/{len(r.checks)} checks passed")
    return ("\n".join(lines) + "\n").encode()


def _short(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4g}"
    return str(v)


__all__ = ["Check", "FAIL", "INCONCLUSIVE", "PASS", "Report", "digest", "emit_report", "status_of"]
