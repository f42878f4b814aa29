"""verify subcommand: invariant suite verdict document"""
import logging
from pathlib import Path

from services.field_io import write_report
from services.verify import run_invariant_suite

logger = logging.getLogger(__name__)

INVARIANT_FAILURE = 4


def register(subparsers):
    parser = subparsers.add_parser("verify", help="run the invariant suite")
    parser.add_argument("--trials", type=int, default=None, help="override verify.trials")
    parser.add_argument("--skip-solves", action="store_true", help="leave out the end-to-end solver invariants")
    parser.set_defaults(handler=handle, command="verify")


def handle(args, config, directory: Path) -> int:
    trials = args.trials if args.trials is not None else config.verify.trials
    include_solves = config.verify.include_solves and not args.skip_solves
    report = run_invariant_suite(config.params, config.grid, trials, config.solve.seed,
                                 include_solves=include_solves, solve_options=config.solve)
    write_report(report.to_dict(), directory / "verify_report.json")
    if not report.passed:
        logger.error(f"Invariant suite failed: {report.failures}")
        return INVARIANT_FAILURE
    return 0
