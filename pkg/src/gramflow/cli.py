"""Command-line front end: run experiments, list them, validate datasets.

Exit codes: 0 means the command ran to completion, including runs whose
bound checks failed (those are results, reported in the summary). 2
means a hard error: unknown experiment, malformed config, unreadable
file, or a numerical blow-up. validate-data exits 3 when the file parses
but violates a dataset invariant, so scripts can tell "bad data" from
"bad invocation".
"""

from __future__ import annotations

import argparse
import sys

from .dataset import DatasetError, load_dataset, validate
from .experiments import (
    DEFAULT_OUT_ENV,
    HarnessError,
    list_experiments,
    parse_config,
    run_experiment,
    summary_filename,
)
from .relu_dynamics import TrainingDiverged


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gramflow",
        description="Numerical checks for gradient-descent training claims.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one named experiment")
    run.add_argument("--experiment", required=True, help="experiment name (see: gramflow list)")
    run.add_argument("--config", default=None, help="flat key=value config file")
    run.add_argument(
        "--seed",
        type=int,
        action="append",
        default=None,
        help="seed to run (repeatable; overrides config file seeds)",
    )
    run.add_argument(
        "--out",
        default=None,
        help=f"output directory (overrides config file and ${DEFAULT_OUT_ENV})",
    )

    sub.add_parser("list", help="list experiments with the claim each one checks")

    vd = sub.add_parser("validate-data", help="check a dataset CSV against its invariants")
    vd.add_argument("file", help="dataset CSV path")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_config(
        args.experiment, config_file=args.config, seeds=args.seed, out_dir=args.out
    )
    summary = run_experiment(cfg)
    for name, ok in summary.verdicts.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    for name, ok in summary.checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    if summary.overridden:
        print(f"overridden by flags: {', '.join(summary.overridden)}")
    print(f"pass_rate: {summary.pass_rate:g}")
    print(f"summary: {cfg.out_dir / summary_filename(cfg.experiment)}")
    return 0


def _cmd_list() -> int:
    for name, claim in list_experiments().items():
        print(f"{name}: {claim}")
    return 0


def _cmd_validate_data(args: argparse.Namespace) -> int:
    try:
        data = load_dataset(args.file)
    except DatasetError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"cannot read {args.file}: {exc}", file=sys.stderr)
        return 2
    report = validate(data)
    for check in report.checks:
        status = "pass" if check.passed else "FAIL"
        print(f"{check.name}: {status} ({check.message})")
    print(f"dataset ok: n={data.n} d={data.d} C={data.C:g}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "list":
            return _cmd_list()
        return _cmd_validate_data(args)
    except (HarnessError, DatasetError, TrainingDiverged, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
