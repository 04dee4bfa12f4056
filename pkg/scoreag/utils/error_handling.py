"""
Error handling utilities for ScoreAG.

This module contains raise-helpers shared by the numerical services so that
failures carry consistent error codes and structured details.
"""

import logging
from typing import Any, Dict, Optional, Sequence

import numpy as np

from scoreag.core.exception_handlers import (
    EmptyInputError,
    NumericOverflowError,
    ScoreAGError,
    ShapeMismatchError,
)

# Set up logger
logger = logging.getLogger(__name__)


def ensure_finite(value: Any, node: str) -> None:
    """
    Raise if an array or number holds NaN or infinity.

    Args:
        value: Array-like to check
        node: Name of the computation that produced it

    Raises:
        NumericOverflowError: Naming ``node``
    """
    if not np.all(np.isfinite(np.asarray(value, dtype=np.float64))):
        logger.error(f"Non-finite value detected at {node}")
        raise NumericOverflowError(node)


def ensure_same_shape(a: Any, b: Any, node: str) -> None:
    """
    Raises:
        ShapeMismatchError: If the two arrays differ in shape
    """
    sa, sb = np.shape(a), np.shape(b)
    if sa != sb:
        raise ShapeMismatchError(node, [sa, sb])


def ensure_non_empty(items: Sequence[Any], operation: str) -> None:
    """
    Raises:
        EmptyInputError: If ``items`` has no elements
    """
    if len(items) == 0:
        raise EmptyInputError(operation)


def create_error_record(error: BaseException, command: Optional[str] = None) -> Dict[str, Any]:
    """
    Build a JSON-serialisable description of an error for ``--json`` echoes.

    Args:
        error: The exception that ended the command
        command: Name of the running subcommand

    Returns:
        Dictionary with error code, message and details
    """
    if isinstance(error, ScoreAGError):
        record = {"error": error.error_code, "message": error.message, "details": error.details}
    else:
        record = {"error": type(error).__name__, "message": str(error), "details": None}
    if command:
        record["command"] = command
    return record
