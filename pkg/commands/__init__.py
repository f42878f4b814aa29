# Commands package
from commands import kernel_info, solve, verify

COMMANDS = (solve, verify, kernel_info)


def register_commands(subparsers):
    """Attach every subcommand parser; each sets its handler as the `handler` default"""
    for command in COMMANDS:
        command.register(subparsers)
