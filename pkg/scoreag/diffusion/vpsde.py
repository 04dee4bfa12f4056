"""
Variance-preserving forward SDE.

    dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw,    beta(t) = beta_min + t (beta_max - beta_min)

with the closed-form Gaussian transition kernel N(alpha(t) x0, sigma2(t) I).
All functions are pure.
"""

from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from scoreag.core.exception_handlers import DegenerateKernelError, InvalidTimeError, ShapeMismatchError
from scoreag.diffcore.tensor import Tensor, as_tensor

ArrayLike = Union[Tensor, np.ndarray, float]


class NoiseSchedule(BaseModel):
    """Linear beta(t) schedule on t in [0, 1]."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    beta_min: float = Field(default=0.1, gt=0)
    beta_max: float = Field(default=20.0, gt=0)
    t_eps: float = Field(default=1e-3, gt=0, lt=1)

    @model_validator(mode="after")
    def check_order(self) -> "NoiseSchedule":
        if self.beta_min > self.beta_max:
            raise ValueError(f"beta_min ({self.beta_min}) must not exceed beta_max ({self.beta_max})")
        return self


class KernelCoeffs(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float
    sigma2: float

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))


def _check_time(t) -> None:
    arr = np.asarray(t, dtype=np.float64)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise InvalidTimeError(t)


def _integral(schedule: NoiseSchedule, t):
    # Integral of beta over [0, t]
    return schedule.beta_min * t + 0.5 * (schedule.beta_max - schedule.beta_min) * t * t


def beta(schedule: NoiseSchedule, t):
    return schedule.beta_min + t * (schedule.beta_max - schedule.beta_min)


def alpha_sigma2(schedule: NoiseSchedule, t) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised kernel coefficients for an array of times."""
    _check_time(t)
    half = 0.5 * _integral(schedule, np.asarray(t, dtype=np.float64))
    alpha = np.exp(-half)
    # 1 - alpha^2 without cancellation for small t
    sigma2 = -np.expm1(-2.0 * half)
    return alpha, sigma2


def coeffs(schedule: NoiseSchedule, t: float) -> KernelCoeffs:
    """
    Transition-kernel coefficients at time ``t``.

    Raises:
        InvalidTimeError: If t is outside [0, 1]
    """
    alpha, sigma2 = alpha_sigma2(schedule, float(t))
    return KernelCoeffs(alpha=float(alpha), sigma2=float(sigma2))


def perturb(x0: ArrayLike, t: float, noise: ArrayLike, schedule: NoiseSchedule) -> Tensor:
    """Sample from the transition kernel: ``alpha(t) x0 + sigma(t) noise``."""
    x0, noise = as_tensor(x0), as_tensor(noise)
    if x0.shape != noise.shape:
        raise ShapeMismatchError("perturb", [x0.shape, noise.shape])
    c = coeffs(schedule, t)
    return x0 * c.alpha + noise * c.sigma


def kernel_score(xt: ArrayLike, x0: ArrayLike, t: float, schedule: NoiseSchedule) -> Tensor:
    """
    Score of the transition kernel, ``-(xt - alpha(t) x0) / sigma2(t)``.

    Raises:
        DegenerateKernelError: If sigma2(t) == 0 (t == 0)
    """
    xt, x0 = as_tensor(xt), as_tensor(x0)
    if xt.shape != x0.shape:
        raise ShapeMismatchError("kernel_score", [xt.shape, x0.shape])
    c = coeffs(schedule, t)
    if c.sigma2 <= 0.0:
        raise DegenerateKernelError(t)
    return (xt - x0 * c.alpha) * (-1.0 / c.sigma2)


def drift(schedule: NoiseSchedule, x: ArrayLike, t: float) -> Tensor:
    """Forward drift ``f(x, t) = -1/2 beta(t) x``."""
    _check_time(t)
    return as_tensor(x) * (-0.5 * beta(schedule, t))


def diffusion(schedule: NoiseSchedule, t: float) -> float:
    """Forward diffusion coefficient ``g(t) = sqrt(beta(t))``."""
    _check_time(t)
    return float(np.sqrt(beta(schedule, t)))
