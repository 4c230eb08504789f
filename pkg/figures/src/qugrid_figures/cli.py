"""Figure rendering CLI: qugrid-figures render --spec <file> --out <dir>."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import render
from .spec import MissingInput, SchemaMismatch, load_spec


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qugrid-figures")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_render = sub.add_parser("render", help="Render one figure spec to an image.")
    p_render.add_argument("--spec", required=True, action="append",
                          help="Figure spec JSON (repeatable).")
    p_render.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    failures = 0
    for spec_path in args.spec:
        try:
            spec = load_spec(Path(spec_path))
            out_path, _ = render(spec, Path(args.out))
            print(f"wrote {out_path}")
        except (MissingInput, SchemaMismatch) as exc:
            print(f"{spec_path}: {exc}", file=sys.stderr)
            failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
