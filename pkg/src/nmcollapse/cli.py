"""Command-line entry point: ``nmcollapse run`` and ``nmcollapse compare``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import __version__
from .ide import IllConditionedError
from .propagator import CausticError
from .scenario import ConfigError, compare_variants, load_config, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

log = logging.getLogger("nmcollapse")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmcollapse", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run the configured variant(s) and write one CSV each"),
        ("compare", "run all four variants and write σ ratios against the white baseline"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML scenario file")
        p.add_argument("--seed-override", type=int, nargs="+", metavar="SEED", help="replace the configured seeds")
        p.add_argument("--grid-override", type=int, metavar="N", help="replace n_steps")
        p.add_argument("--output-dir", metavar="DIR", help="replace the output directory")
        p.add_argument("--residual-report", action="store_true", help="print IDE residual diagnostics")
    return parser


def _apply_overrides(cfg, args):
    changes = {}
    if args.seed_override:
        changes["seeds"] = list(args.seed_override)
    if args.grid_override is not None:
        if args.grid_override < 1:
            raise ConfigError("--grid-override must be positive")
        changes["n_steps"] = args.grid_override
    if args.output_dir:
        changes["output"] = args.output_dir
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _report(results) -> None:
    for name, res in results.items():
        for key, val in res.diagnostics.items():
            if isinstance(val, float):
                print(f"{name}: {key} = {val:.3e}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            results = run_scenario(cfg)
            for name, res in results.items():
                print(f"{name}: sigma(t_end) = {res.sigma[-1]:.6g}")
        else:
            cmp = compare_variants(cfg)
            results = cmp.results
            for name, s in cmp.sigma.items():
                print(f"{name}: sigma(t_end) = {s[-1]:.6g}, within 1% of asymptote from t = {cmp.settle[name]:.6g}")
        if args.residual_report:
            _report(results)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (IllConditionedError, CausticError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
