"""Command-line experiment runner.

One subcommand per study; every run reads a declarative config file and
writes a structured report plus a flat table. Exit codes: 0 when every row
passed, 1 when any row failed, 2 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import sys

from ..fem.scenarios import ConfigInvalid
from .config import STUDIES, load_study
from .report import IoError, emit_report
from .studies import run_study


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fetikit",
        description=(
            "Config-driven experiments for the multiplier-coupled solver: "
            "convergence studies, mesh-ratio stability sweeps, preconditioner "
            "scaling, fracture networks, and monolithic-oracle comparisons."
        ),
    )
    sub = parser.add_subparsers(dest="study", required=True)
    descriptions = {
        "converge": "refinement study with observed convergence orders",
        "sweep": "mesh-ratio stability sweep with stabilized rescue runs",
        "precond": "iteration/condition scaling in the subdomain count",
        "fracture": "branching-network junction balance and flux splits",
        "oracle": "reduced solve vs dense monolithic saddle solve",
    }
    for study in STUDIES:
        p = sub.add_parser(study, help=descriptions[study])
        p.add_argument("--config", required=True, help="path to the study config file")
        p.add_argument("--out", default=None, help="output directory (default from config)")
        p.add_argument(
            "--format",
            default=None,
            choices=("table", "structured", "both"),
            help="which report files to write",
        )
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_study(args.config, study=args.study, seed=args.seed)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        report = run_study(config)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = args.out if args.out is not None else config.out
    fmt = args.format if args.format is not None else config.format
    try:
        paths = emit_report(report, out_dir, fmt=fmt)
    except (IoError, ValueError) as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return 2

    for row in report.rows:
        status = "pass" if row.passed else f"FAIL ({row.failure})"
        print(f"[{report.study}] {row.label}: {status}")
    for path in paths:
        print(f"wrote {path}")
    if not report.all_passed:
        print(f"{sum(not r.passed for r in report.rows)} row(s) failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
