"""Command line front end: render both figure styles for one run log."""

from __future__ import annotations

import argparse
import os
import sys

from .figures import plot_trajectory, plot_window_summary
from .records import PlotsError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render score-trajectory and window-summary figures "
                    "from an exported run log.")
    parser.add_argument("source",
                        help="run directory, or a .csv/.jsonl log file")
    parser.add_argument("--out", default=".",
                        help="directory the images are written into")
    parser.add_argument("--width", type=int, default=5,
                        help="generations per summary window")
    parser.add_argument("--format", choices=("png", "svg"), default="png",
                        help="image format")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        os.makedirs(args.out, exist_ok=True)
        written = [
            plot_trajectory(
                args.source, os.path.join(args.out, f"trajectory.{args.format}")),
            plot_window_summary(
                args.source, os.path.join(args.out, f"windows.{args.format}"),
                width=args.width),
        ]
    except (PlotsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
