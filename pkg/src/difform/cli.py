"""Command-line harness.

Subcommands:
  validate <config>   parse and cross-check a scenario, no computation
  run <config>        all suites (boundary, mosco, paths, weakconv)
  mosco <config>      Mosco certificate (+ freeze table for decreasing families)
  paths <config>      path ensembles and the quadratic-variation report
  weakconv <config>   fdd and modulus/tightness reports

Exit codes: 0 all gates pass, 2 statistical gate failed, 3 invalid config,
4 numerical failure.  ``--seed`` overrides the config's Monte-Carlo seed and
``DIFFORM_OUTPUT_DIR`` (or ``--out``) overrides the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys

from .scenario import (EXIT_CONFIG, ConfigError, run_scenario, validate_config)

_SUITES = {
    "run": ("boundary", "mosco", "paths", "weakconv"),
    "mosco": ("boundary", "mosco"),
    "paths": ("paths",),
    "weakconv": ("weakconv",),
}


def _load(path: str):
    with open(path) as fh:
        return json.load(fh)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="difform", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("validate", "run", "mosco", "paths", "weakconv"):
        p = sub.add_parser(name)
        p.add_argument("config", help="scenario JSON file")
        if name != "validate":
            p.add_argument("--seed", type=int, default=None, help="override mc seed")
            p.add_argument("--out", default=None, help="override output directory")
    args = parser.parse_args(argv)

    try:
        raw = _load(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        sc = validate_config(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print("config ok")
        return 0

    code = run_scenario(sc, out_dir=args.out, seed_override=args.seed,
                        suites=_SUITES[args.command])
    if code == 0:
        print("all gates passed")
    else:
        print(f"finished with exit code {code}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
