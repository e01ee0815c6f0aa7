"""Command-line entry point: ``osdr run|sweep|compare``.

Exit status: 0 on success, 2 for unusable input (bad config, missing file),
3 when some runs failed numerically (artifacts are still written, together
with ``failures.json``).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ConfigError, load_config, parse_seeds, validate
from .datasets import DatasetFormatError
from .engine import ConfigurationError
from .experiments import compare, compare_csv, run_experiment, write_artifacts

EXIT_OK, EXIT_INPUT, EXIT_FAILED_RUNS = 0, 2, 3


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", type=Path, help="experiment config file")
    parser.add_argument("--seeds", help="override the evaluation seeds, e.g. 0-9 or 1,4,7")
    parser.add_argument("--out", type=Path, help="override the output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osdr", description="Online supervised dimensionality reduction experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run the base point of a config (sweep axes ignored)"))
    _common(sub.add_parser("sweep", help="run every grid point of the config's sweep axes"))
    cmp = sub.add_parser("compare", help="per-row deltas (b - a) between two aggregate CSVs")
    cmp.add_argument("a", type=Path)
    cmp.add_argument("b", type=Path)
    cmp.add_argument("--out", type=Path, help="also write the comparison CSV here")
    return parser


def _execute(args, sweep: bool) -> int:
    cfg = load_config(args.config)
    changes = {}
    if args.seeds:
        changes["seeds"] = parse_seeds(args.seeds)
    if args.out:
        changes["out"] = str(args.out)
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
        validate(cfg, str(args.config))
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1", source="command line")
    result = run_experiment(cfg, workers=args.jobs, sweep=sweep)
    out = write_artifacts(result, cfg.out)
    sys.stdout.write((out / "summary.txt").read_text())
    if result.failures:
        print(f"{len(result.failures)} run(s) failed; see {out / 'failures.json'}", file=sys.stderr)
        return EXIT_FAILED_RUNS
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            text = compare_csv(compare(args.a, args.b))
            if args.out:
                args.out.write_text(text)
            sys.stdout.write(text)
            return EXIT_OK
        return _execute(args, sweep=args.command == "sweep")
    except (ConfigError, ConfigurationError, DatasetFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
