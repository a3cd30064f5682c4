"""Command-line front end: ``cartan-kit <task-kind|run|examples|fmt> ...``."""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from .dsl import ProblemError, emit_report, format_problem, parse_problem
from .dsl.resolve import TASK_PARAMS
from .symbolic import DEFAULT_SEED, DEFAULT_TRIALS
from .tasks import RunConfig, run_problem

EXAMPLES = (
    "flat", "exp-scaled", "surfaces-of-revolution", "constant-curvature-sphere", "constant-curvature-plane",
    "constant-curvature-hyperbolic", "affinely-curved", "punctured-plane-monodromy", "so3", "nonunimodular-2d",
)


class ConfigError(Exception):
    pass


def example_text(name: str) -> str:
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; available: {', '.join(EXAMPLES)}")
    return resources.files("cartan_kit.examples").joinpath(f"{name}.ck").read_text(encoding="utf-8")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed for sampling (default %(default)s)")
    p.add_argument("--tol", type=float, default=None, help="override the default tolerance of every task")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS, help="random samples per check")
    p.add_argument("--max-order", type=int, default=4, help="highest invariant-chain order to try")
    p.add_argument("--out", type=Path, default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--task", action="append", default=None, metavar="NAME", help="only run tasks with this name")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cartan-kit", description="Coframe invariants, classifying algebroids and "
                                 "equivalence checks driven by problem files.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run every task in the given problem files")
    p.add_argument("files", nargs="+", type=Path)
    _common(p)
    for kind in TASK_PARAMS:
        p = sub.add_parser(kind, help=f"run only the {kind} tasks of the given problem files")
        p.add_argument("files", nargs="+", type=Path)
        _common(p)
    p = sub.add_parser("examples", help="run a bundled example, or list them")
    p.add_argument("name", nargs="?")
    p.add_argument("--show", action="store_true", help="print the example source instead of running it")
    _common(p)
    p = sub.add_parser("fmt", help="print a problem file in canonical form")
    p.add_argument("file", type=Path)
    return ap


def _sources(args) -> list[tuple[str, str]]:
    if args.command == "examples":
        return [(f"{args.name}.ck", example_text(args.name))]
    out = []
    for f in args.files:
        try:
            out.append((str(f), f.read_text(encoding="utf-8")))
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read {f}: {exc}") from None
    return out


def _write(report: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(report + "\n")
    else:
        path.write_text(report + "\n", encoding="utf-8")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fmt":
        try:
            sys.stdout.write(format_problem(args.file.read_text(encoding="utf-8")))
        except (OSError, UnicodeDecodeError) as exc:
            print(f"cartan-kit: cannot read {args.file}: {exc}", file=sys.stderr)
            return 2
        except ProblemError as exc:
            for d in exc.diagnostics:
                print(d.format(str(args.file)), file=sys.stderr)
            return 2
        return 0
    if args.command == "examples" and (args.name is None or args.show):
        if args.name is None:
            print("\n".join(EXAMPLES))
            return 0
        try:
            sys.stdout.write(example_text(args.name))
        except ConfigError as exc:
            print(f"cartan-kit: {exc}", file=sys.stderr)
            return 2
        return 0

    cfg = RunConfig(seed=args.seed, tol=args.tol, trials=args.trials, max_order=args.max_order)
    errors: list[str] = []
    results: list[dict] = []
    try:
        if args.trials < 1 or args.max_order < 0 or (args.tol is not None and not args.tol > 0):
            raise ConfigError("--trials must be positive, --max-order nonnegative and --tol positive")
        kinds = {args.command} if args.command in TASK_PARAMS else None
        specs = []
        for name, text in _sources(args):
            try:
                specs.append((name, parse_problem(text)))
            except ProblemError as exc:
                errors.extend(d.format(name) for d in exc.diagnostics)
        if errors:
            raise ConfigError("")
        if args.task:
            known = {t.name for _, spec in specs for t in spec.tasks}
            missing = sorted(set(args.task) - known)
            if missing:
                raise ConfigError(f"no task named {', '.join(missing)}")
        for name, spec in specs:
            for r in run_problem(spec, cfg, kinds, set(args.task) if args.task else None):
                r["file"] = name
                results.append(r)
    except ConfigError as exc:
        if str(exc):
            errors.append(f"cartan-kit: {exc}")
        for e in errors:
            print(e, file=sys.stderr)
        _write(emit_report([], errors=errors), args.out)
        return 2
    _write(emit_report(results), args.out)
    failed = [r for r in results if not r["pass"]]
    for r in failed:
        print(f"cartan-kit: task {r['kind']} {r['name']} failed" + (f": {r['error']}" if "error" in r else ""),
              file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
