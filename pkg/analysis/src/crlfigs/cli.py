"""Command-line entry for figure generation.

Exit codes: 0 success, 1 io/runtime failure, 2 invalid arguments or schema.
"""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, FigureDataError, FigureSpec, SchemaMismatchError, make_figure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crlsim-figs",
        description="Render evaluation figures from crlsim metrics CSVs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-figure", help="render one figure plus its sidecar table")
    p.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    p.add_argument("--input", required=True, action="append",
                   help="metrics CSV (repeatable)")
    p.add_argument("--baseline", required=True, help="baseline run id")
    p.add_argument("--out", required=True,
                   help="raster image path; a vector twin and .csv sidecar are written next to it")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, inputs=tuple(args.input),
                          baseline_run_id=args.baseline, out_path=args.out)
        table = make_figure(spec)
    except (SchemaMismatchError, FigureDataError, ValueError) as exc:
        print(f"figure error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({len(table)} rows in sidecar)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
