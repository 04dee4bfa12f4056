"""
Optimizer updates over lists of parameter arrays.

Updates are functional: they return new arrays and never modify their inputs,
so parameter snapshots handed out earlier stay valid.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from scoreag.core.exception_handlers import ContractError, ShapeMismatchError


def _check_pairs(a: Sequence[np.ndarray], b: Sequence[np.ndarray], op: str) -> None:
    if len(a) != len(b):
        raise ShapeMismatchError(op, [(len(a),), (len(b),)], f"{op}: got {len(a)} and {len(b)} buffers")
    for x, y in zip(a, b):
        if np.shape(x) != np.shape(y):
            raise ShapeMismatchError(op, [np.shape(x), np.shape(y)])


def sgd_nesterov_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    lr: float,
    momentum: float,
    weight_decay: float,
    velocities: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    One SGD step with Nesterov momentum and L2 weight decay.

    With ``g = grad + wd * p`` the update is ``v = mu * v + g`` followed by
    ``p = p - lr * (g + mu * v)``.

    Args:
        params: Current parameter arrays
        grads: Gradients, one per parameter
        lr: Learning rate (> 0)
        momentum: Momentum coefficient in [0, 1)
        weight_decay: L2 coefficient (>= 0)
        velocities: Momentum buffers; zeros when omitted

    Returns:
        Updated parameters and updated velocities

    Raises:
        ContractError: For out-of-range hyperparameters
        ShapeMismatchError: If params, grads or velocities disagree in shape
    """
    if not lr > 0:
        raise ContractError(f"Learning rate must be positive, got {lr}", "sgd_nesterov_step")
    if not 0 <= momentum < 1:
        raise ContractError(f"Momentum must lie in [0, 1), got {momentum}", "sgd_nesterov_step")
    if weight_decay < 0:
        raise ContractError(f"Weight decay must be non-negative, got {weight_decay}", "sgd_nesterov_step")
    _check_pairs(params, grads, "sgd_nesterov_step")
    if velocities is None:
        velocities = [np.zeros_like(p, dtype=np.float64) for p in params]
    _check_pairs(params, velocities, "sgd_nesterov_step")

    new_params, new_velocities = [], []
    for p, g, v in zip(params, grads, velocities):
        g = g + weight_decay * p if weight_decay else np.asarray(g, dtype=np.float64)
        v = momentum * v + g
        new_params.append(p - lr * (g + momentum * v))
        new_velocities.append(v)
    return new_params, new_velocities


class NesterovSGD:
    """Stateful wrapper keeping the momentum buffers between steps."""

    def __init__(self, momentum: float = 0.9, weight_decay: float = 5e-4):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities: Optional[List[np.ndarray]] = None

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> List[np.ndarray]:
        params, self.velocities = sgd_nesterov_step(
            params, grads, lr, self.momentum, self.weight_decay, self.velocities
        )
        return params


def ema_update(shadow: Sequence[np.ndarray], params: Sequence[np.ndarray], decay: float) -> List[np.ndarray]:
    """
    Exponential moving average: ``shadow = decay * shadow + (1 - decay) * params``.

    Raises:
        ContractError: If decay is outside [0, 1)
        ShapeMismatchError: If shadow and params disagree in shape
    """
    if not 0 <= decay < 1:
        raise ContractError(f"EMA decay must lie in [0, 1), got {decay}", "ema_update")
    _check_pairs(shadow, params, "ema_update")
    if decay == 0:
        return [np.array(p, dtype=np.float64) for p in params]
    return [decay * s + (1.0 - decay) * p for s, p in zip(shadow, params)]


def cyclic_cosine_lr(step: int, cycle_steps: int, lr0: float) -> float:
    """Cosine annealing from ``lr0`` towards 0, restarting every ``cycle_steps`` steps."""
    if cycle_steps < 1:
        raise ContractError(f"cycle_steps must be positive, got {cycle_steps}", "cyclic_cosine_lr")
    phase = (step % cycle_steps) / cycle_steps
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * phase))
