"""Command line entry point: run scenarios, refinement studies and listings."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys
from typing import List, Optional, Sequence

from .config import RunConfig, load_config
from .const import EXIT_ASSERTION_FAILED, EXIT_CONFIG_ERROR, EXIT_PASS
from .errors import ConeLabError
from .scenario_manager import (
    describe_scenario,
    list_scenarios,
    load_scenarios,
    run_convergence,
    run_scenario,
    scenario_config,
)

_LOGGER = logging.getLogger(__name__)


def resolve_config(target: str, threads: Optional[int] = None, out: Optional[str] = None) -> RunConfig:
    """A path to an INI file, or the name of a built-in scenario."""
    path = Path(target)
    if path.exists() or path.suffix:
        config = load_config(path)
    else:
        config = scenario_config(target)
    if out is None and not path.exists():
        out = str(Path(config.output["directory"]) / config.name)
    return config.with_overrides(threads=threads, output_dir=out)


def _cmd_run(args: argparse.Namespace) -> int:
    config = resolve_config(args.config, args.threads, args.out)
    result = run_scenario(config, progress=args.progress)
    for check in result.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status}  {check.criterion:<24} {check.value:.6g}  (threshold {check.threshold:.6g})  {check.detail}")
    print(f"Reports in {config.output_dir} (config {result.config_hash[:12]})")
    return result.exit_code


def _cmd_convergence(args: argparse.Namespace) -> int:
    config = resolve_config(args.config, args.threads, args.out)
    rows = run_convergence(config, args.levels, progress=args.progress)
    print(f"{'quantity':<22} {'level':>5} {'h':>10} {'error':>12} {'order':>8} {'min':>6}")
    for row in rows:
        print(f"{row.quantity:<22} {row.level:>5d} {row.h:>10.4g} {row.error:>12.4e} {row.order:>8.3f} {row.threshold:>6.2f}")
    failed = sorted({row.quantity for row in rows if not row.passed})
    if failed:
        print(f"Below threshold: {', '.join(failed)}")
        return EXIT_ASSERTION_FAILED
    return EXIT_PASS


def _cmd_list(args: argparse.Namespace) -> int:
    scenarios = load_scenarios()
    for name in list_scenarios():
        print(f"{name:<22} {scenarios[name]['description'].split('. ')[0]}")
    return EXIT_PASS


def _cmd_describe(args: argparse.Namespace) -> int:
    print(describe_scenario(args.name), end="")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conelab",
        description="Cone-energy laboratory for the variable-coefficient critical wave equation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Exit codes:
  0  every enabled criterion passed
  1  a criterion failed
  2  configuration error
  3  numerical abort (NaN or eikonal divergence)

Examples:
  # Run a built-in scenario
  %(prog)s run flat_sanity

  # Run an INI configuration with four threads into ./results
  %(prog)s --threads 4 --out results run my_run.ini

  # Observed orders over three dyadic grids
  %(prog)s convergence identity_suite --levels 3

  # Built-in scenarios
  %(prog)s list
  %(prog)s describe geometry_only
        """,
    )
    parser.add_argument("--threads", type=int, help="numba worker threads (outputs do not depend on it)")
    parser.add_argument("--out", help="Output directory for CSV reports")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--progress", action="store_true", help="Show progress bars")

    subparsers = parser.add_subparsers(dest="command", required=True)
    run = subparsers.add_parser("run", help="Run a configuration or built-in scenario")
    run.add_argument("config", help="INI file or scenario name")
    run.set_defaults(handler=_cmd_run)

    convergence = subparsers.add_parser("convergence", help="Refinement study of the discrete identities")
    convergence.add_argument("config", help="INI file or scenario name")
    convergence.add_argument("--levels", type=int, default=3, help="Number of dyadic grids (default 3)")
    convergence.set_defaults(handler=_cmd_convergence)

    listing = subparsers.add_parser("list", help="List built-in scenarios")
    listing.set_defaults(handler=_cmd_list)

    describe = subparsers.add_parser("describe", help="Describe a built-in scenario")
    describe.add_argument("name", help="Scenario name")
    describe.set_defaults(handler=_cmd_describe)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    if getattr(args, "levels", 2) < 2:
        parser.error("--levels must be at least 2")
    try:
        return args.handler(args)
    except ConeLabError as err:
        _LOGGER.error("%s", err)
        return err.exit_code
    except KeyError as err:
        _LOGGER.error("%s", err.args[0] if err.args else err)
        return EXIT_CONFIG_ERROR


def run(argv: Optional[List[str]] = None) -> None:
    sys.exit(main(argv))
