"""
Custom exceptions and exception handlers for ScoreAG.

This module provides:
1. Custom exception classes for the different failure scenarios
2. A CLI exception handler that turns these exceptions into exit codes
3. Helpers for consistent error logging and reporting
"""

import logging
from typing import Any, Dict, Optional, Sequence

from pydantic import ValidationError

# Setup logger
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class ScoreAGError(Exception):
    """Base exception for all custom ScoreAG exceptions."""

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_RUNTIME,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code or self.__class__.__name__
        self.details = details
        super().__init__(self.message)


class ConfigurationError(ScoreAGError):
    """Exception raised for missing or invalid configuration."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.path = path
        super().__init__(
            message=message,
            exit_code=EXIT_USAGE,
            error_code="ConfigurationError",
            details=details or {"path": path},
        )


class UsageError(ScoreAGError):
    """Exception raised for an unknown subcommand or flag."""

    def __init__(self, message: str, usage: Optional[str] = None):
        self.usage = usage
        super().__init__(message=message, exit_code=EXIT_USAGE, error_code="UsageError")


class ContractError(ScoreAGError):
    """Exception raised when an operation's precondition is violated."""

    def __init__(
        self,
        message: str,
        operation: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.operation = operation
        super().__init__(
            message=message,
            error_code="ContractError",
            details=details or {"operation": operation},
        )


class ShapeMismatchError(ContractError):
    """Exception raised when tensor shapes are incompatible at a node."""

    def __init__(
        self,
        node: str,
        shapes: Sequence[Any],
        message: Optional[str] = None,
    ):
        self.node = node
        self.shapes = [tuple(s) for s in shapes]
        super().__init__(
            message=message or f"Shape mismatch at node '{node}': {self.shapes}",
            operation=node,
            details={"node": node, "shapes": [list(s) for s in self.shapes]},
        )
        self.error_code = "ShapeMismatch"


class NumericOverflowError(ScoreAGError):
    """Exception raised when a value becomes NaN or infinite."""

    def __init__(self, node: str, message: Optional[str] = None):
        self.node = node
        super().__init__(
            message=message or f"Non-finite value produced at node '{node}'",
            error_code="NumericOverflow",
            details={"node": node},
        )


class InvalidTimeError(ContractError):
    """Exception raised for diffusion times outside [0, 1]."""

    def __init__(self, t: Any):
        self.t = t
        super().__init__(
            message=f"Diffusion time must lie in [0, 1], got {t}",
            operation="coeffs",
            details={"t": str(t)},
        )


class DegenerateKernelError(ContractError):
    """Exception raised when the transition kernel has zero variance."""

    def __init__(self, t: Any):
        self.t = t
        super().__init__(
            message=f"Transition kernel is degenerate at t={t} (sigma2 == 0)",
            operation="kernel_score",
            details={"t": str(t)},
        )


class TrainingDivergedError(ScoreAGError):
    """Exception raised when a training loss becomes non-finite."""

    def __init__(self, step: int, lr: float, loss: float, model_kind: str = "model"):
        self.step = step
        self.lr = lr
        self.loss = loss
        super().__init__(
            message=f"Training of {model_kind} diverged at step {step} (lr={lr:g}, loss={loss})",
            error_code="TrainingDiverged",
            details={"step": step, "lr": lr, "loss": str(loss), "model_kind": model_kind},
        )


class SamplerDivergedError(ScoreAGError):
    """Exception raised when the reverse-time solver blows up."""

    def __init__(self, step: int, t: float, max_abs: float):
        self.step = step
        self.t = t
        super().__init__(
            message=f"Sampler diverged at step {step} (t={t:.5f}, max|x|={max_abs:.4g})",
            error_code="SamplerDiverged",
            details={"step": step, "t": t, "max_abs": max_abs},
        )


class GuidanceDivergedError(ScoreAGError):
    """Exception raised when a guidance gradient is not finite."""

    def __init__(self, step: int, t: float, term: str):
        self.step = step
        self.t = t
        self.term = term
        super().__init__(
            message=f"Guidance term '{term}' produced a non-finite gradient at step {step} (t={t:.5f})",
            error_code="GuidanceDiverged",
            details={"step": step, "t": t, "term": term},
        )


class InvalidSpecError(ContractError):
    """Exception raised for inconsistent guidance or task specifications."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(message=message, operation="spec", details={"field": field})
        self.error_code = "InvalidSpec"


class DatasetError(ScoreAGError):
    """Exception raised for datasets violating their invariants."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, error_code="DatasetError", details=details)


class IdxFormatError(DatasetError):
    """Base class for IDX parsing failures."""

    def __init__(self, message: str, path: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        self.path = path
        super().__init__(message=message, details={"path": path, **(details or {})})
        self.error_code = self.__class__.__name__


class BadMagicError(IdxFormatError):
    """The two leading IDX bytes are not zero."""


class UnsupportedTypeCodeError(IdxFormatError):
    """The IDX type code is not the unsigned-byte code."""


class TruncatedFileError(IdxFormatError):
    """The IDX file ends before the declared header or payload does."""

    def __init__(self, path: Optional[str], expected: int, actual: int, section: str = "payload"):
        self.expected = expected
        self.actual = actual
        super().__init__(
            message=f"Truncated IDX {section}: expected {expected} bytes, found {actual}",
            path=path,
            details={"expected": expected, "actual": actual, "section": section},
        )


class CheckpointError(ScoreAGError):
    """Exception raised for missing or corrupt checkpoint files."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message=message, error_code="CheckpointError", details={"path": path})


class MetricComputationError(ScoreAGError):
    """Exception raised when a metric cannot be computed."""

    def __init__(self, message: str, metric: str, details: Optional[Dict[str, Any]] = None):
        self.metric = metric
        super().__init__(
            message=message,
            error_code="MetricComputationError",
            details=details or {"metric": metric},
        )


class EmptyInputError(ContractError):
    """Exception raised when an operation receives an empty collection."""

    def __init__(self, operation: str):
        super().__init__(message=f"{operation} requires a non-empty input", operation=operation)
        self.error_code = "EmptyInput"


# Exception handlers for the command line

def handle_cli_exception(exc: BaseException, command: Optional[str] = None) -> int:
    """
    Log an exception raised by a command and translate it to an exit code.

    Args:
        exc: The exception that escaped the command
        command: Name of the running subcommand, for log context

    Returns:
        Process exit code (1 for usage/configuration problems, 2 otherwise)
    """
    from scoreag.core.monitoring import capture_exception

    if isinstance(exc, ScoreAGError):
        log = logger.warning if exc.exit_code == EXIT_USAGE else logger.error
        log(
            f"Error {exc.error_code}: {exc.message}",
            extra={"error_code": exc.error_code, "details": exc.details, "command": command},
        )
        if exc.exit_code != EXIT_USAGE:
            capture_exception(exc, {"command": command, "error_code": exc.error_code})
        return exc.exit_code

    if isinstance(exc, ValidationError):
        errors = [
            f"{' > '.join(str(loc) for loc in err.get('loc', []))}: {err.get('msg')}"
            for err in exc.errors()
        ]
        logger.warning(f"Validation error: {errors}", extra={"command": command})
        return EXIT_USAGE

    logger.error(
        f"Unexpected error: {str(exc)}",
        extra={"error_type": type(exc).__name__, "command": command},
        exc_info=exc,
    )
    capture_exception(exc, {"command": command})
    return EXIT_RUNTIME
