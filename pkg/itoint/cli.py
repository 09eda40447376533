"""
Command-line interface.

    run              run the checks selected by a config file
    list-integrands  print the built-in integrand catalog
    dump-paths       write the first paths of the ensemble as t,w CSVs

Exit status: 0 when every check passes, 1 when a check fails, 2 on a usage
or configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .errors import ItoIntError, UsageError
from .export import save_paths
from .library import integrand_catalog
from .runner import ExperimentRunner, run
from .schemas import CHECK_NAMES, ExperimentConfig, LevelRange, load_config
from .verification import CheckResult
from .wiener import TimeGrid

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

DEFAULT_CONFIG = "config/experiment_config.yaml"


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=DEFAULT_CONFIG, help="Path to YAML configuration file")
    parser.add_argument("--seed", help="Master seed override (decimal or 0x hex)")
    parser.add_argument("--out", help="Output directory override")
    parser.add_argument("--levels", help="Level range override, kmin:kmax")
    parser.add_argument("--paths", type=int, help="Ensemble size override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itoint", description="Itô integral construction and checks")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: WARNING)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run verification checks")
    _add_experiment_arguments(run_parser)
    run_parser.add_argument(
        "--check",
        help=f"Comma-separated checks to run (default: those enabled in the config); one of {', '.join(CHECK_NAMES)}",
    )

    subparsers.add_parser("list-integrands", help="List built-in integrands")

    dump_parser = subparsers.add_parser("dump-paths", help="Write sample paths on the k_max grid")
    _add_experiment_arguments(dump_parser)
    dump_parser.add_argument("--count", type=int, default=5, help="Number of paths to write (default: 5)")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Load the config file and apply flag overrides.

    Raises:
        FileNotFoundError: If the config file does not exist
        ConfigError: If the file or the overrides are invalid
    """
    config = load_config(args.config)
    updates: Dict[str, Any] = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if args.levels is not None:
        updates["levels"] = LevelRange.parse(args.levels).model_dump()
    if args.paths is not None:
        updates["paths"] = args.paths
    if updates:
        config = config.override(updates)
    if getattr(args, "check", None):
        config = config.select_checks([name.strip() for name in args.check.split(",") if name.strip()])
    return config


def _print_result(result: CheckResult) -> None:
    mark = "✓" if result.passed else "✗"
    print(f"{mark} {result.name}: statistic {result.statistic:.4g} (tolerance {result.tolerance:.4g})")


def command_run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    print(f"✓ Configuration loaded: {config.paths} paths, levels {config.levels.k_min}..{config.levels.k_max}, "
          f"seed {config.master_seed}")
    outcome = run(config, on_result=_print_result)

    print("\nRun Summary:")
    print(f"  Checks: {len(outcome.results)}")
    print(f"  Passed: {sum(r.passed for r in outcome.results)}")
    print(f"  Output directory: {outcome.output_dir}")
    return EXIT_OK if outcome.passed else EXIT_CHECK_FAILED


def command_list_integrands(args: argparse.Namespace) -> int:
    frame = pd.DataFrame(integrand_catalog(), columns=["name", "parameters", "h2", "continuous", "description"])
    print(frame.to_string(index=False))
    return EXIT_OK


def command_dump_paths(args: argparse.Namespace) -> int:
    if args.count < 1:
        raise UsageError(f"--count must be positive, got {args.count}")
    config = resolve_config(args)
    runner = ExperimentRunner(config)
    ensemble = runner.ensemble_for(TimeGrid.dyadic(config.levels.k_max, config.horizon))
    written = save_paths(ensemble, args.count, Path(config.output_dir) / "paths")
    print(f"✓ Wrote {len(written)} paths to {Path(config.output_dir) / 'paths'}")
    return EXIT_OK


COMMANDS = {
    "run": command_run,
    "list-integrands": command_list_integrands,
    "dump-paths": command_dump_paths,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")

    try:
        return COMMANDS[args.command](args)
    except (ItoIntError, FileNotFoundError) as e:
        print(f"✗ {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
