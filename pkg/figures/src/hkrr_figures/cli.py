"""Command line for figure rendering: one invocation renders one figure.

The figure spec comes from flags or from a JSON file with the same fields
(``--spec spec.json``); flags override file values.  Exits nonzero on schema
mismatches, naming the offending column.
"""

from __future__ import annotations

import argparse
import json
import sys

from .render import FIGURE_KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkrr-figures", description=__doc__)
    p.add_argument("--spec", help="JSON file with the figure spec")
    p.add_argument("--kind", choices=FIGURE_KINDS)
    p.add_argument("--input", action="append", default=[],
                   help="input file, optionally label=path (repeatable)")
    p.add_argument("--point", action="append", default=[],
                   help="r2_vs_m point as label:m:path-to-eval.json (repeatable)")
    p.add_argument("--title", default=None)
    p.add_argument("--out", help="output path stem; writes <stem>.png and <stem>.svg")
    return p


def spec_from_args(args) -> FigureSpec:
    doc = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            doc = json.load(fh)
        unknown = set(doc) - {"kind", "inputs", "points", "title", "out"}
        if unknown:
            raise SchemaError(f"unknown spec keys {sorted(unknown)}")
    kind = args.kind or doc.get("kind")
    out = args.out or doc.get("out")
    if not kind:
        raise SchemaError("a figure kind is required (--kind or spec file)")
    if not out:
        raise SchemaError("an output path is required (--out or spec file)")
    return FigureSpec(
        kind=kind,
        inputs=list(args.input) or list(doc.get("inputs", [])),
        points=list(args.point) or list(doc.get("points", [])),
        title=args.title if args.title is not None else doc.get("title", ""),
        out=out,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        for path in render(spec_from_args(args)):
            print(path)
    except (SchemaError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
