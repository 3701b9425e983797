"""Run every built-in scenario and write one JSON report per scenario.

usage: python scripts/run_scenarios.py [outdir] [--seed N]
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from weaksym.report import emit_report
from weaksym.scenarios import SCENARIOS, run_scenario


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir", nargs="?", default="reports")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    worst = 0
    for name in SCENARIOS:
        t0 = time.perf_counter()
        rep = run_scenario(name, seed=args.seed)
        (out / f"{name}.json").write_bytes(emit_report(rep))
        n_pass = sum(c.passed for c in rep.checks)
        print(f"{name:<26} {n_pass}/{len(rep.checks)} pass  {time.perf_counter() - t0:6.1f}s")
        worst = max(worst, rep.exit_code)
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
