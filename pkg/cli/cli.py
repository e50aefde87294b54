"""Subcommand parser and the error boundary of the command line."""

import logging
from typing import List, Optional

from core.config import configure_logging
from core.errors import NegcnError

from .commands import COMMANDS
from .helpers import CliArgumentParser, common_options

log = logging.getLogger("CLI")


def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(
        prog="negcn",
        description="Label-aware graph refinement, SGC node classification and "
        "neighbor sampling for recommendation. Reports are JSON on stdout.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=CliArgumentParser)
    subparsers.required = True
    common = common_options()
    for command in COMMANDS:
        command.register(subparsers, common)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse ``argv``, run the subcommand and map failures to exit codes.

    Returns:
        int: 0 on success, 1 usage error, 2 data error, 3 numeric failure.
    """
    configure_logging(0)
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.verbose - args.quiet)
        return args.handler(args)
    except NegcnError as e:
        log.error("%s", e)
        return e.exit_code
