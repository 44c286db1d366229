"""Command line: schedlab-plots render <csv> <kind> <out>."""

from __future__ import annotations

import argparse
import sys

from .frame import SchemaError
from .render import FIGURE_KINDS, render


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schedlab-plots",
                                description="deterministic SVG figures from "
                                            "metrics CSV files")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure from one CSV")
    r.add_argument("csv", help="metrics CSV file")
    r.add_argument("kind", choices=sorted(FIGURE_KINDS))
    r.add_argument("out", help="output SVG path")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        out = render(args.csv, args.kind, args.out)
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
