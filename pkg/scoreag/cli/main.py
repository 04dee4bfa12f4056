"""
Command-line entry point for ScoreAG.

This module builds the argument parser, sets up logging and error reporting,
registers the command groups and maps failures to exit codes:
0 on success, 1 for usage or configuration errors, 2 for runtime failures.
"""

import argparse
import logging
import sys
from typing import List, Optional

from scoreag import __version__
from scoreag.cli.commands import attacks, data, diagnostics, evaluate, tasks, train
from scoreag.core.config import settings
from scoreag.core.exception_handlers import EXIT_USAGE, UsageError, handle_cli_exception
from scoreag.core.monitoring import setup_monitoring
from scoreag.io.results import to_json
from scoreag.utils.error_handling import create_error_record

# Set up logger
logger = logging.getLogger(__name__)

COMMAND_GROUPS = [data, train, tasks, attacks, evaluate, diagnostics]


class ArgumentParser(argparse.ArgumentParser):
    """Parser that raises instead of exiting so every failure maps to an exit code."""

    def error(self, message: str):
        raise UsageError(message, self.format_usage())


def common_options() -> argparse.ArgumentParser:
    parent = ArgumentParser(add_help=False)
    parent.add_argument("--config", default=None, help="JSON run configuration (defaults apply when omitted)")
    parent.add_argument("--s-x", dest="s_x", type=float, default=None, help="Reconstruction guidance scale")
    parent.add_argument("--s-y", dest="s_y", type=float, default=None, help="Classifier guidance scale")
    parent.add_argument("--target-class", dest="target_class", type=int, default=None, help="Targeted mode class")
    parent.add_argument("--steps", type=int, default=None, help="Sampler steps")
    parent.add_argument("--seed", type=int, default=None, help="Run seed")
    parent.add_argument("--weights", choices=["live", "ema"], default=None, help="Weight set used at sampling time")
    parent.add_argument("--out-dir", dest="out_dir", default=None, help="Run directory for all artifacts")
    parent.add_argument("--json", action="store_true", help="Echo results as JSON on stdout")
    return parent


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="scoreag",
        description="Score-based adversarial generation, transformation and purification",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    parents = [common_options()]
    for group in COMMAND_GROUPS:
        group.register(subparsers, parents)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Args:
        argv: Arguments without the program name; ``sys.argv[1:]`` when omitted

    Returns:
        Process exit code
    """
    setup_monitoring(settings)
    parser = build_parser()
    command = None
    args = None
    try:
        args = parser.parse_args(argv)
        command = args.command
        logger.info(f"Starting {command}")
        code = args.handler(args)
        logger.info(f"Finished {command} with exit code {code}")
        return code
    except UsageError as e:
        sys.stderr.write(e.usage or parser.format_usage())
        sys.stderr.write(f"scoreag: error: {e.message}\n")
        return EXIT_USAGE
    except Exception as e:
        code = handle_cli_exception(e, command)
        if getattr(args, "json", False):
            sys.stdout.write(to_json(create_error_record(e, command)) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
