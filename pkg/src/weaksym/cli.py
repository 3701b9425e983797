"""Command line: ``weaksym scenario``, ``weaksym analyze``, ``weaksym list``.

Exit codes: 0 every check passed (inconclusive counts as not failed),
1 some check failed, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import TASKS, run_tasks
from .expr import ExprError
from .model import ModelError, parse_model
from .report import Report, digest, emit_report
from .scenarios import SCENARIOS, ScenarioError, emit_model, run_scenario
from .system import LINEAR, SEMILINEAR

USAGE_ERROR = 2


class UsageError(Exception):
    pass


def _overrides(extra: list[str]) -> dict:
    """``--key value`` or ``--key=value`` pairs left over by argparse."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"--{key} needs a value")
            val = extra[i + 1]
            i += 2
        out[key] = val
    return out


def _parse_tasks(spec: str | None, model) -> tuple:
    if spec is None:
        listed = model.scenario.get("tasks")
        if listed is not None:
            spec = listed
        else:
            auto = []
            if model.system is not None and model.groups:
                auto.append("factor")
            if model.system is not None and model.ansatz is not None:
                auto.append("determining")
            if model.system is not None:
                auto.append("verify")
            if model.nets:
                auto.append("associate")
            return tuple(auto)
    tasks = tuple(t.strip() for t in spec.split(",") if t.strip())
    for t in tasks:
        if t not in TASKS:
            raise UsageError(f"unknown task {t!r}; choose from {', '.join(TASKS)}")
    return tasks


def _check_supported(model, tasks) -> None:
    sys_ = model.system
    for t in tasks:
        if t in ("factor", "determining", "verify") and sys_ is None:
            raise UsageError(f"task {t!r} needs a [system] section")
        if t == "determining":
            if model.ansatz is None:
                raise UsageError("task 'determining' needs an [ansatz] section")
            if sys_.classification not in (LINEAR, SEMILINEAR) and not sys_.is_quasilinear:
                raise UsageError(f"task 'determining' does not support {sys_.classification} systems")
        if t == "associate" and not model.nets:
            raise UsageError("task 'associate' needs at least one [net] section")


def analyze(path: str, tasks: str | None = None, seed: int = 42) -> Report:
    text = Path(path).read_text()
    model = parse_model(text)
    chosen = _parse_tasks(tasks, model)
    _check_supported(model, chosen)
    r = Report(digest(text, list(chosen)), seed)
    r.extend(run_tasks(model, chosen, seed))
    return r


def _write(report: Report, fmt: str, dest: str | None) -> None:
    data = emit_report(report, fmt)
    if dest:
        Path(dest).write_bytes(data)
        if fmt == "json":
            sys.stdout.write(emit_report(report, "text").decode())
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weaksym", description="Symmetry factorization and association checks for PDE systems.")
    sub = p.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scenario", help="run a built-in scenario; extra --key value pairs override its parameters")
    sc.add_argument("name", choices=sorted(SCENARIOS))
    sc.add_argument("--seed", type=int, default=42)
    sc.add_argument("--report", metavar="PATH", help="write the report here instead of stdout")
    sc.add_argument("--format", choices=("json", "text"), default="text")
    sc.add_argument("--emit-model", action="store_true", help="print the scenario's model text and exit")

    an = sub.add_parser("analyze", help="run tasks on a model file")
    an.add_argument("file")
    an.add_argument("--tasks", help=f"comma separated subset of {','.join(TASKS)}; default from the file")
    an.add_argument("--seed", type=int, default=42)
    an.add_argument("--report", metavar="PATH")
    an.add_argument("--format", choices=("json", "text"), default="text")

    sub.add_parser("list", help="list the built-in scenarios")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command == "list":
            for name, s in SCENARIOS.items():
                keys = ", ".join(f"{k}={v}" for k, v in s.defaults.items())
                print(f"{name:<26} {s.summary}" + (f"  [{keys}]" if keys else ""))
            return 0
        if args.command == "scenario":
            ov = _overrides(extra)
            if args.emit_model:
                sys.stdout.write(emit_model(args.name, ov))
                return 0
            report = run_scenario(args.name, ov, seed=args.seed)
        else:
            if extra:
                raise UsageError(f"unexpected arguments: {' '.join(extra)}")
            report = analyze(args.file, args.tasks, args.seed)
        _write(report, args.format, args.report)
        return report.exit_code
    except ModelError as exc:
        where = getattr(args, "file", "<model>")
        print(f"{where}:{exc.line}:{exc.column}: {exc.message}", file=sys.stderr)
    except (UsageError, ScenarioError, OSError) as exc:
        print(f"weaksym: {exc}", file=sys.stderr)
    except ExprError as exc:
        print(f"weaksym: {exc}", file=sys.stderr)
    return USAGE_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
