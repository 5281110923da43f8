"""Command-line entry point.

    aperiodic-array run CONFIG.json [--out DIR] [--seed N] [--threads N]
    aperiodic-array validate CONFIG.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..geometry import GeometryError, RepairFailed
from ..pattern import EmptySidelobeRegion
from .config import ConfigError, validate_config, with_overrides
from .recipes import run

log = logging.getLogger("aperiodic_array")


def _load(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    return validate_config(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aperiodic-array", description="Subarray-level aperiodic array synthesis")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides output_dir)")
    p_run.add_argument("--seed", type=int, help="master seed (overrides seed)")
    p_run.add_argument("--threads", type=int, help="fitness evaluation threads")

    p_val = sub.add_parser("validate", help="check a config and print it fully resolved")
    p_val.add_argument("config")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = _load(args.config)
        if args.command == "validate":
            print(json.dumps(spec.resolved(), indent=2, sort_keys=True))
            return 0
        spec = with_overrides(spec, output_dir=args.out, seed=args.seed, threads=args.threads)
        out = run(spec)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    except (RepairFailed, EmptySidelobeRegion, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
