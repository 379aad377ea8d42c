"""Command line: stargrowth-render <run_dir> --kind <k> --out fig.png"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .readers import FormatError
from .render import PLOT_KINDS, RenderSpec, render


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="stargrowth-render",
        description="Render a simulation run directory to a PNG figure.",
    )
    p.add_argument("run_dir", help="completed run directory")
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--cmap", default="viridis")
    p.add_argument("--dpi", type=int, default=150)
    p.add_argument("--version", action="version", version=__version__)
    try:
        args = p.parse_args(argv)
    except SystemExit as e:
        return 0 if not e.code else 1
    try:
        out = render(RenderSpec(run_dir=args.run_dir, kind=args.kind,
                                out=args.out, cmap=args.cmap, dpi=args.dpi))
    except (FormatError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
