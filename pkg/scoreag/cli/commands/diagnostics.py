"""
Diagnostics: finite-difference checks of the autodiff engine.
"""

import logging
import sys
from argparse import Namespace

from scoreag.core.exception_handlers import EXIT_OK, EXIT_RUNTIME
from scoreag.diffcore.gradcheck import DEFAULT_TOLERANCE, run_suite
from scoreag.io.results import to_json

# Set up logger
logger = logging.getLogger(__name__)


def gradcheck(args: Namespace) -> int:
    """Print the worst relative error; exit 0 iff every case is within tolerance."""
    seed = args.seed if args.seed is not None else 0
    report = run_suite(seed=seed, n_random=args.n_random, tolerance=args.tolerance)
    if args.json:
        sys.stdout.write(to_json(report.to_dict()) + "\n")
    else:
        sys.stdout.write(
            f"max relative error: {report.max_rel_error:.3e} over {len(report.cases)} cases "
            f"(relative to max(|analytic|, |numeric|, {report.floor:.0e}))\n"
        )
    if not report.passed:
        logger.error(f"Gradient check failed for {len(report.failures)} case(s)")
        return EXIT_RUNTIME
    return EXIT_OK


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("gradcheck", parents=parents, help="Finite-difference gradient suite")
    parser.add_argument("--n-random", type=int, default=100, help="Random composed graphs to check")
    parser.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE, help="Maximum relative error")
    parser.set_defaults(handler=gradcheck)
