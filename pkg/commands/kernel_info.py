"""kernel-info subcommand: truncated Maxwell and Bopp-Podolsky kernel energies"""
import logging
import sys
from pathlib import Path

from services.bp_field import kernel_energy_schedule
from services.field_io import write_kernel_csv

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("kernel-info", help="tabulate truncated kernel energies on an eps-halving schedule")
    parser.set_defaults(handler=handle, command="kernel-info")


def handle(args, config, directory: Path) -> int:
    settings = config.kernel_info
    rows = kernel_energy_schedule(config.model.a, settings.epsilon_start, settings.r_max,
                                  settings.levels, settings.factor)
    path = directory / "kernel_energies.csv"
    write_kernel_csv(rows, path)
    write_kernel_csv(rows, sys.stdout)
    logger.info(f"Kernel energies written to {path}")
    return 0
