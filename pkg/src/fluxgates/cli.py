"""Command line: ``fluxgates run|validate|list``.

Exit codes: 0 success, 2 configuration error, 3 simulation or fit failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import BackendError, ConfigError
from .experiments import OUTPUT_ROOT_ENV, list_experiments, run, validate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluxgates", description="Fluxonium pulse-level gate experiments.")
    verbs = parser.add_subparsers(dest="verb", required=True)
    p_run = verbs.add_parser("run", help="run the experiment named in a config file")
    p_run.add_argument("config")
    p_val = verbs.add_parser("validate", help="check a config file without running it")
    p_val.add_argument("config")
    verbs.add_parser("list", help="list available experiments")
    parser.epilog = f"Set {OUTPUT_ROOT_ENV} to override where result directories are created."
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.verb == "list":
        for name, description in list_experiments():
            print(f"{name:20s} {description}")
        return EXIT_OK
    if args.verb == "validate":
        problems = validate(args.config)
        if problems:
            for p in problems:
                print(p, file=sys.stderr)
            return EXIT_CONFIG
        print("ok")
        return EXIT_OK
    try:
        bundle = run(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    print(bundle.directory)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
