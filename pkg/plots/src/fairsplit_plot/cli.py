"""fairsplit-plot: render ratio scatter plots from fairsplit reports.

Example:
  fairsplit-plot --reports 'runs/*/report.json' --comparison coupled_vs_decoupled --out fig.svg
"""

from __future__ import annotations

import argparse
import glob
import sys

from . import __version__
from .render import COMPARISONS, ReportFormatError, render_ratio_scatter


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fairsplit-plot", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fairsplit-plot {__version__}")
    parser.add_argument(
        "--reports", required=True, nargs="+", help="report.json paths or globs (quoted)"
    )
    parser.add_argument("--comparison", required=True, choices=COMPARISONS)
    parser.add_argument("--out", required=True, help="output image path (.svg; .png twin is also written)")
    parser.add_argument("--axis", default="log", choices=["log", "linear"], help="axis scale")
    args = parser.parse_args(argv)

    paths = []
    for pattern in args.reports:
        matched = sorted(glob.glob(pattern))
        paths.extend(matched if matched else [pattern])
    try:
        written = render_ratio_scatter(paths, args.comparison, args.out, axis_scale=args.axis)
    except (ReportFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
