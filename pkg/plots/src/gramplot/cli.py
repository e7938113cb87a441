"""Command-line front end: one figure per invocation.

Exit codes: 0 on a rendered figure, 2 on schema mismatches, unreadable
inputs, or I/O failures.
"""

from __future__ import annotations

import argparse
import sys

from gramplot.render import KINDS, PlotSchemaError, PlotSpec, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gramplot",
        description="Render gramflow experiment CSVs into PNG panels.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS, help="plot kind")
    parser.add_argument(
        "--in",
        dest="inputs",
        action="append",
        required=True,
        metavar="CSV",
        help="input CSV (repeatable for width-sweep)",
    )
    parser.add_argument("--out", required=True, metavar="PNG", help="output image path")
    parser.add_argument(
        "--log-x",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="force the x axis to log (or linear with --no-log-x)",
    )
    parser.add_argument(
        "--log-y",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="force the y axis to log (or linear with --no-log-y)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = PlotSpec(
            kind=args.kind,
            inputs=tuple(args.inputs),
            out=args.out,
            log_x=args.log_x,
            log_y=args.log_y,
        )
        out = render(spec)
    except (PlotSchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
