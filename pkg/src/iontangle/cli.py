"""Command-line entry point.

Subcommands: ``scenario <name>``, ``sweep``, ``steady``, ``evolve``,
``list``.  Exit codes: 0 success, 1 configuration error, 2 numeric
failure.  Diagnostics go to stderr; outputs are CSV tables plus a
meta.json per run.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, scenarios
from .dynamics import IntegrationError
from .qop import InputError
from .steady import AmbiguousSteadyStateError, NumericError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iontangle",
        description="Dissipative preparation of entangled steady states of two "
                    "trapped ions: reference experiments, sweeps and solves.")
    parser.add_argument("--version", action="version", version=f"iontangle {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_list = sub.add_parser("list", help="list the named scenarios")

    p_scen = sub.add_parser("scenario", help="run a named scenario")
    p_scen.add_argument("name", help="scenario name (see 'iontangle list')")
    p_scen.add_argument("--config", help="JSON config file")
    p_scen.add_argument("--out", help="output directory (default: out)")

    for cmd, text in (("sweep", "steady-state parameter sweep over config axes"),
                      ("steady", "single steady-state solve"),
                      ("evolve", "time evolution of a chosen model")):
        p = sub.add_parser(cmd, help=text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help="output directory (default: out)")
    return parser


def _load(args) -> dict:
    cfg = scenarios.load_config(args.config) if args.config else {}
    if args.out:
        cfg["output_dir"] = args.out
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name in scenarios.SCENARIO_NAMES:
                print(name)
            return EXIT_OK
        cfg = _load(args)
        if args.command == "scenario":
            result = scenarios.run_scenario(args.name, cfg)
        elif args.command == "sweep":
            result = scenarios.run_sweep(cfg)
        elif args.command == "steady":
            result = scenarios.run_steady_cmd(cfg)
        else:
            result = scenarios.run_evolve_cmd(cfg)
    except (scenarios.ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, AmbiguousSteadyStateError, IntegrationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {result.out_dir}/meta.json and "
          f"{', '.join(sorted(result.tables))}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
