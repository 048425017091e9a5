"""Command-line entry points.

    crossdiff run <config> --out <dir> [--seed S] [--threads K]
    crossdiff validate <config>
    crossdiff replay <manifest> --out <dir> [--threads K]

``run`` exits 0 exactly when every acceptance check of the experiment passed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import CrossDiffError
from .config import parse_config
from .experiments import run_experiment
from .report import read_manifest, write_report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossdiff",
        description="Cross-diffusion particle/PDE experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--out", type=Path, required=True)
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    run_p.add_argument("--threads", type=int, default=1)

    val_p = sub.add_parser("validate", help="parse and validate a config")
    val_p.add_argument("config", type=Path)

    rep_p = sub.add_parser("replay", help="rerun from a manifest")
    rep_p.add_argument("manifest", type=Path)
    rep_p.add_argument("--out", type=Path, required=True)
    rep_p.add_argument("--threads", type=int, default=1)
    return parser


def _execute(spec, out_dir: Path, threads: int) -> int:
    from .experiments import RunReport

    report = RunReport(spec)
    try:
        run_experiment(spec, threads=threads, report=report)
    except CrossDiffError as exc:
        # flush whatever was collected before the abort
        paths = write_report(report, out_dir)
        print(f"error during {spec.kind}: {exc}", file=sys.stderr)
        print(f"partial results flushed to {paths['report']}",
              file=sys.stderr)
        return 2
    paths = write_report(report, out_dir)
    for check in report.checks:
        print(f"[{'PASS' if check.passed else 'FAIL'}] {check.name}: "
              f"{check.detail}")
    print(f"report written to {paths['report']}")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            parse_config(args.config.read_text(encoding="utf-8"))
            print(f"{args.config}: valid")
            return 0
        if args.command == "run":
            spec = parse_config(args.config.read_text(encoding="utf-8"))
            if args.seed is not None:
                spec = replace(spec, seed=args.seed)
            return _execute(spec, args.out, args.threads)
        if args.command == "replay":
            spec, _seed = read_manifest(args.manifest)
            return _execute(spec, args.out, args.threads)
    except CrossDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
