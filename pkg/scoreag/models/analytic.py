"""
Closed-form score functions used as oracles.

``UnitGaussianScore`` is the marginal score of N(0, I) data under the VP-SDE
(which leaves N(0, I) invariant); ``PointMassScore`` is the score of data
concentrated at a single point ``c``. Both follow the same ``score`` protocol
as ``ScoreModel`` and are differentiable in ``x``.
"""

from typing import Optional, Sequence

import numpy as np

from scoreag.core.exception_handlers import ContractError, ShapeMismatchError
from scoreag.diffcore import ops
from scoreag.diffcore.tensor import Tensor, as_tensor
from scoreag.diffusion.vpsde import NoiseSchedule, alpha_sigma2
from scoreag.models.score_model import Labels, Times, broadcast_times


class UnitGaussianScore:
    model_kind = "unit_gaussian"

    def __init__(self, input_shape: Sequence[int], schedule: Optional[NoiseSchedule] = None, num_classes: int = 1):
        self.input_shape = tuple(input_shape)
        self.schedule = schedule or NoiseSchedule()
        self.num_classes = num_classes

    def score(self, x: Tensor, t: Times, y: Labels = None) -> Tensor:
        x = as_tensor(x)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError("unit_gaussian", [x.shape, self.input_shape])
        return -x


class PointMassScore:
    """Score of the transition kernel started at a fixed point ``center``."""

    model_kind = "point_mass"

    def __init__(self, center: np.ndarray, schedule: Optional[NoiseSchedule] = None, num_classes: int = 1):
        self.center = np.asarray(center, dtype=np.float64)
        self.input_shape = self.center.shape
        self.schedule = schedule or NoiseSchedule()
        self.num_classes = num_classes

    def score(self, x: Tensor, t: Times, y: Labels = None) -> Tensor:
        x = as_tensor(x)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError("point_mass", [x.shape, self.input_shape])
        n = x.shape[0]
        alpha, sigma2 = alpha_sigma2(self.schedule, broadcast_times(t, n))
        if np.any(sigma2 <= 0):
            raise ContractError("Point-mass score is undefined at t = 0", "score")
        mean = alpha.reshape((n,) + (1,) * len(self.input_shape)) * self.center[None, ...]
        return ops.scale_rows(x - Tensor._wrap(mean), -1.0 / sigma2)

    def exact_flow(self, x1: np.ndarray, t: float, t_from: float = 1.0) -> np.ndarray:
        """
        Solution of the probability-flow ODE started at ``x1`` at time ``t_from``.

        Along the flow the deviation from the kernel mean scales with sigma(t).
        """
        a_from, s2_from = alpha_sigma2(self.schedule, t_from)
        a_t, s2_t = alpha_sigma2(self.schedule, t)
        ratio = np.sqrt(s2_t / s2_from)
        return a_t * self.center + ratio * (np.asarray(x1) - a_from * self.center)
