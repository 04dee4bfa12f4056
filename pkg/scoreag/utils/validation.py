"""
Validation helpers shared by the task, baseline and evaluation services.
"""

import logging
from typing import Sequence

import numpy as np

from scoreag.core.exception_handlers import ContractError, InvalidSpecError, ShapeMismatchError

# Set up logger
logger = logging.getLogger(__name__)


def validate_unit_range(x: np.ndarray, name: str, operation: str) -> np.ndarray:
    """
    Check that an image lies in [0, 1].

    Raises:
        ContractError: If any value falls outside the unit interval
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ContractError(f"{name} must lie in [0, 1]", operation)
    return x


def validate_input_shape(x: np.ndarray, input_shape: Sequence[int], operation: str) -> None:
    if tuple(np.shape(x)) != tuple(input_shape):
        raise ShapeMismatchError(operation, [np.shape(x), tuple(input_shape)])


def validate_shared_shape(model, classifier, operation: str) -> None:
    """
    Raises:
        ShapeMismatchError: If score model and classifier disagree on input shape
    """
    if tuple(model.input_shape) != tuple(classifier.input_shape):
        raise ShapeMismatchError(operation, [tuple(model.input_shape), tuple(classifier.input_shape)])


def validate_class(label: int, num_classes: int, field: str) -> int:
    """
    Raises:
        InvalidSpecError: If ``label`` is not in 1..num_classes
    """
    if not 1 <= int(label) <= num_classes:
        raise InvalidSpecError(f"{field}={label} must lie in 1..{num_classes}", field)
    return int(label)
