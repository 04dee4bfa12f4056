"""
Time- and class-conditional score network.

The trunk is an MLP over ``[c_in * x_flat, time embedding, class embedding]``.
Its output ``F`` is combined with a skip term so that the noise estimate is

    eps = sigma * x / v + c_out * F,    v = alpha^2 * sigma_data^2 + sigma^2

and the score is ``-eps / sigma``. With ``F = 0`` this is the exact score of
zero-mean Gaussian data with per-value scale ``sigma_data``; the network only
learns the residual. Row 0 of the class embedding table is the reserved
unconditional index, so labels 1..K map to rows 1..K.
"""

import logging
from typing import Any, Dict, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from scoreag.core.exception_handlers import ContractError
from scoreag.diffcore import ops
from scoreag.diffcore.tensor import Tensor, as_tensor
from scoreag.diffusion.vpsde import NoiseSchedule, alpha_sigma2
from scoreag.models.base import Module, WeightSet, glorot
from scoreag.schemas.config import ScoreModelConfig

# Set up logger
logger = logging.getLogger(__name__)

UNCONDITIONAL = 0
DEFAULT_SIGMA_DATA = 0.5

Labels = Union[None, int, Sequence[int], np.ndarray]
Times = Union[float, np.ndarray]


class ScoreFunction(Protocol):
    """Anything that returns ``grad_x log p_t(x | y)`` for a batch."""

    input_shape: Tuple[int, ...]
    schedule: NoiseSchedule

    def score(self, x: Tensor, t: Times, y: Labels = None) -> Tensor:
        ...


def time_embedding(t: np.ndarray, dim: int, scale: float = 30.0) -> np.ndarray:
    """Sinusoidal features of ``t`` in [0, 1], shape ``(len(t), dim)``; ``scale`` is the top frequency."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = scale * np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def broadcast_times(t: Times, n: int) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ContractError(f"Expected {n} times, got shape {arr.shape}", "score")
    return arr


def broadcast_labels(y: Labels, n: int, num_classes: int) -> np.ndarray:
    """Per-sample class indices; ``None`` means unconditional."""
    if y is None:
        return np.zeros(n, dtype=np.int64)
    arr = np.asarray(y, dtype=np.int64)
    if arr.ndim == 0:
        arr = np.full(n, int(arr), dtype=np.int64)
    if arr.shape != (n,):
        raise ContractError(f"Expected {n} labels, got shape {arr.shape}", "score")
    if np.any(arr < 0) or np.any(arr > num_classes):
        raise ContractError(f"Labels must lie in 0..{num_classes}", "score")
    return arr


class ScoreModel(Module):
    """MLP score network with EMA weights."""

    model_kind = "score_model"

    def __init__(
        self,
        input_shape: Sequence[int],
        num_classes: int,
        schedule: NoiseSchedule,
        config: Optional[ScoreModelConfig] = None,
        seed: int = 0,
    ):
        super().__init__(input_shape, num_classes)
        self.schedule = schedule
        self.config = config or ScoreModelConfig()
        self.dim = int(np.prod(self.input_shape))
        self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        self._add("class_embed", rng.normal(0.0, 1.0, size=(self.num_classes + 1, cfg.class_embed_dim)))
        width = self.dim + cfg.time_embed_dim + cfg.class_embed_dim
        for i in range(cfg.depth):
            self._add(f"hidden{i}.weight", glorot(rng, width, cfg.hidden))
            self._add(f"hidden{i}.bias", np.zeros(cfg.hidden))
            width = cfg.hidden
        self._add("out.weight", glorot(rng, width, self.dim, scale=0.1))
        self._add("out.bias", np.zeros(self.dim))
        self.reset_ema()

    def config_dict(self) -> Dict[str, Any]:
        return {
            "schedule": self.schedule.model_dump(),
            "score_model": self.config.model_dump(exclude={"checkpoint"}),
        }

    @property
    def sigma_data(self) -> float:
        """Per-value data scale used by the skip term; set from the training data if unconfigured."""
        return self.config.sigma_data if self.config.sigma_data is not None else DEFAULT_SIGMA_DATA

    def set_sigma_data(self, value: float) -> None:
        if not np.isfinite(value) or value <= 0:
            raise ContractError(f"sigma_data must be positive, got {value}", "set_sigma_data")
        self.config = self.config.model_copy(update={"sigma_data": float(value)})

    def preconditioning(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-sample ``(c_in, skip, residual)`` so that ``score = skip * x + residual * F(c_in * x)``."""
        alpha, sigma2 = alpha_sigma2(self.schedule, t)
        if np.any(sigma2 <= 0):
            raise ContractError("Score network is undefined at t = 0", "score")
        s2 = self.sigma_data ** 2
        v = alpha * alpha * s2 + sigma2
        c_out = alpha * np.sqrt(s2) / np.sqrt(v)
        return 1.0 / np.sqrt(v), -1.0 / v, -c_out / np.sqrt(sigma2)

    def network(self, p: Dict[str, Tensor], x: Tensor, t: np.ndarray, y: np.ndarray) -> Tensor:
        """Raw trunk output ``F`` for an already scaled batch, shaped like ``x``."""
        self.check_batch(x, "score_model")
        n = x.shape[0]
        h = ops.concat(
            [
                ops.flatten(x),
                Tensor._wrap(time_embedding(t, self.config.time_embed_dim, self.config.time_embed_scale)),
                ops.take_rows(p["class_embed"], y),
            ],
            axis=1,
        )
        for i in range(self.config.depth):
            h = ops.silu(ops.affine(h, p[f"hidden{i}.weight"], p[f"hidden{i}.bias"]))
        out = ops.affine(h, p["out.weight"], p["out.bias"])
        return ops.reshape(out, (n,) + self.input_shape)

    def score_with(self, p: Dict[str, Tensor], x: Tensor, t: Times, y: Labels = None) -> Tensor:
        """Score under an explicit parameter mapping (used by training)."""
        x = as_tensor(x)
        n = x.shape[0]
        times = broadcast_times(t, n)
        labels = broadcast_labels(y, n, self.num_classes)
        c_in, skip, residual = self.preconditioning(times)
        out = self.network(p, ops.scale_rows(x, c_in), times, labels)
        return ops.add(ops.scale_rows(x, skip), ops.scale_rows(out, residual))

    def score(self, x: Tensor, t: Times, y: Labels = None, weights: Optional[WeightSet] = None) -> Tensor:
        """
        Evaluate ``s_theta(x, t, y)`` with constant weights.

        Args:
            x: Batch shaped ``(n, *input_shape)``; may require gradients
            t: Scalar time or one time per sample
            y: Class label(s) in 1..K; None or 0 selects the unconditional embedding
            weights: Weight set, defaulting to ``self.weights``

        Returns:
            Score tensor shaped like ``x``
        """
        return self.score_with(self.tensors(weights), x, t, y)
