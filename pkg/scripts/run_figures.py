"""Run every shipped experiment config and write its artifacts under runs/.

Usage: python scripts/run_figures.py [--jobs N] [--only NAME ...]
"""

import argparse
import sys
from pathlib import Path

from osdr.cli import main

ROOT = Path(__file__).resolve().parents[1]
# config file, figure it corresponds to
EXPERIMENTS = [
    ("spectrum.cfg", "second-eigenvector separation"),
    ("static_ellipse.cfg", "static ellipse at d = 2"),
    ("static_ellipse_dims.cfg", "static ellipse, error against d"),
    ("rotating.cfg", "rotating subspace, tau sweep"),
    ("linear.cfg", "linear response RMSE, log(c1/c2) sweep"),
    ("tree_network.cfg", "interaction network (Table I)"),
]


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--only", nargs="*", help="config names without .cfg")
    parser.add_argument("--out", type=Path, default=ROOT / "runs")
    args = parser.parse_args(argv)
    status = 0
    for name, what in EXPERIMENTS:
        stem = name[:-len(".cfg")]
        if args.only and stem not in args.only:
            continue
        print(f"== {stem}: {what}", flush=True)
        code = main(["sweep", str(ROOT / "configs" / name), "--out", str(args.out / stem), "--jobs", str(args.jobs)])
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(run())
