"""Command-line entry point: ``denseval <command> --config run.toml [--key value ...]``.

Exit codes: 0 on success, 1 when ``warnings_as_errors`` is set and the run
warned, 2 on unreadable or malformed input.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from .config import RunConfig
from .exceptions import InputError
from .pipeline import COMMANDS

log = logging.getLogger("denseval")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="denseval",
                                     description="Evaluate dense instance segmentation.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="TOML file with run settings")
    parser.add_argument("-v", "--verbose", action="store_true")
    for f in fields(RunConfig):
        flags = dict.fromkeys([f"--{f.name}", f"--{f.name.replace('_', '-')}"])
        parser.add_argument(*flags, dest=f.name, default=None, metavar="VALUE")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name) is not None}
    try:
        cfg = RunConfig.load(args.config, overrides)
        _, warnings = COMMANDS[args.command](cfg)
    except (InputError, OSError) as exc:
        print(f"denseval: error: {exc}", file=sys.stderr)
        return 2
    if warnings and cfg.warnings_as_errors:
        print(f"denseval: {len(warnings)} warning(s) treated as errors", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
