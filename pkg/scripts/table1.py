"""Interaction-network comparison: hierarchical OSDR against flat online logistic regression.

Prints mean and standard deviation of the test error over the config's seeds
and writes the usual artifacts.

Usage: python scripts/table1.py [--seeds 0-9] [--jobs N] [--out DIR]
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from osdr.config import load_config, parse_seeds
from osdr.experiments import run_experiment, write_artifacts

ROOT = Path(__file__).resolve().parents[1]
NAMES = {"osdr": "hierarchical OSDR", "flat": "flat online logistic regression"}


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, default=ROOT / "configs" / "tree_network.cfg")
    parser.add_argument("--seeds")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", type=Path, default=ROOT / "runs" / "table1")
    args = parser.parse_args(argv)
    cfg = load_config(args.config)
    if args.seeds:
        cfg = dataclasses.replace(cfg, seeds=parse_seeds(args.seeds))
    result = run_experiment(cfg, workers=args.jobs)
    write_artifacts(result, args.out)
    print(f"{'method':<34}{'mean P_e':>10}{'std':>10}{'seeds':>7}")
    for s in result.summaries:
        print(f"{NAMES.get(s.contender, s.contender):<34}{s.mean:>10.4f}{s.std:>10.4f}{len(s.finals):>7}")
    return 3 if result.failures else 0


if __name__ == "__main__":
    sys.exit(run())
