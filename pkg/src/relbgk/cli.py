"""Command line entry point: ``relbgk [CONFIG] [--out DIR] [--seed N] [--verify-only]``."""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import ConfigError, RelBGKError
from .scenarios import list_scenarios, load_config, run_scenario, verify_suite

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="relbgk",
        description="Run relativistic BGK scenarios from JSON configs. "
                    "Without arguments, print the scenario catalog.")
    p.add_argument("config", nargs="?", help="scenario config (JSON)")
    p.add_argument("--out", help="override the output directory of the config")
    p.add_argument("--seed", type=int, help="override the PRNG seed (PCG64)")
    p.add_argument("--verify-only", action="store_true",
                   help="run the certified-tolerance suite and exit")
    p.add_argument("--list", action="store_true", help="print the scenario catalog")
    p.add_argument("--version", action="version", version=f"relbgk {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verify_only:
        checks = verify_suite()
        for c in checks:
            print(c.line())
        return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECKS
    if args.list or args.config is None:
        print(list_scenarios())
        return EXIT_OK
    if args.seed is not None and args.seed < 0:
        print("error: seed: must be a nonnegative integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run_scenario(load_config(args.config), output_dir=args.out, seed=args.seed)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RelBGKError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(res.summary())
    print(f"manifest: {res.manifest}")
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
