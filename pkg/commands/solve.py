"""solve-ground and solve-nodal subcommands"""
import logging
from pathlib import Path

from services.errors import NonConvergenceError
from services.field_io import dump_field, write_report, write_trace_csv
from services.minimize import SolveReport, solve_ground, solve_nodal

logger = logging.getLogger(__name__)

SOLVERS = {"solve-ground": ("ground", solve_ground), "solve-nodal": ("nodal", solve_nodal)}


def register(subparsers):
    for name, (kind, _) in SOLVERS.items():
        parser = subparsers.add_parser(name, help=f"minimize J for the {kind} level")
        parser.set_defaults(handler=handle, command=name)


def write_artifacts(report: SolveReport, config, directory: Path) -> None:
    """Report JSON, energy trace CSV and binary field dump"""
    document = report.to_dict()
    document["config"] = config.to_dict()
    write_report(document, directory / f"{report.kind}_report.json")
    write_trace_csv(report.trace, directory / f"{report.kind}_trace.csv")
    dump_field(report.field, directory / f"{report.kind}_field.sbpf")


def handle(args, config, directory: Path) -> int:
    kind, solver = SOLVERS[args.command]
    logger.info(f"Running {args.command} in {directory}")
    try:
        report = solver(config.params, config.grid, config.solve)
    except NonConvergenceError as e:
        if e.report is not None:
            write_artifacts(e.report, config, directory)
        raise
    write_artifacts(report, config, directory)
    logger.info(f"{kind.capitalize()} level {report.level:.12g} after {report.iterations} iterations")
    return 0
