"""
Schrödinger-Bopp-Podolsky solver command line
Subcommands: solve-ground, solve-nodal, verify, kernel-info
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from commands import register_commands
from config.run_config import apply_overrides, parse_config
from config.settings import OUTPUT_ROOT, log_configuration, setup_logging
from services.errors import BracketError, ConfigError, InvalidParameterError, NonConvergenceError, SolverError
from services.field_io import make_run_directory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NONCONVERGENCE = 2
EXIT_CONFIG = 3


class CommandLineParser(argparse.ArgumentParser):
    """Reports usage errors as ConfigError so they exit 3 with a JSON line"""

    def error(self, message):
        raise ConfigError(f"invalid command line: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = CommandLineParser(prog="sbp", description=__doc__,
                               formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override solve.seed")
    parser.add_argument("--out", default=None, help="run directory (default <SBP_OUTPUT_ROOT>/<timestamp>_seed<seed>)")
    parser.add_argument("--allow-local", action="store_true", help="accept q = 0 (local Schrödinger limit)")
    parser.add_argument("--grid-n", type=int, default=None, help="override grid.N")
    parser.add_argument("--max-iters", type=int, default=None, help="override solve.max_iters")
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_commands(subparsers)
    return parser


def exit_code_for(error: SolverError) -> int:
    if isinstance(error, (ConfigError, InvalidParameterError)):
        return EXIT_CONFIG
    if isinstance(error, (NonConvergenceError, BracketError)):
        return EXIT_NONCONVERGENCE
    return EXIT_FAILURE


def report_error(error: SolverError) -> None:
    """One JSON line on stderr"""
    print(json.dumps(error.to_dict(), default=str), file=sys.stderr)


def load_config(args):
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise ConfigError(f"cannot read configuration {args.config}: {e}")
    config = parse_config(text, allow_local=args.allow_local)
    return apply_overrides(config, seed=args.seed, grid_n=args.grid_n, max_iters=args.max_iters, out=args.out)


def run_directory(config) -> Path:
    if config.output_directory:
        directory = Path(config.output_directory)
        directory.mkdir(parents=True, exist_ok=True)
        return directory
    return make_run_directory(OUTPUT_ROOT, config.solve.seed)


def main(argv=None) -> int:
    setup_logging()
    command = "sbp"
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        config = load_config(args)
        log_configuration(config)
        directory = run_directory(config)
        return args.handler(args, config, directory)
    except SolverError as e:
        logger.error(f"{command} failed: {e}")
        report_error(e)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
