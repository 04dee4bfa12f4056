"""
Shared parameter handling for the trainable networks.

A model owns two ordered parameter sets of numpy arrays: the live weights
updated by the optimiser and the EMA shadow used at sampling time. Forward
passes take a name -> Tensor mapping so callers decide which set is used and
whether it participates in differentiation.
"""

import logging
from collections import OrderedDict
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from scoreag.core.exception_handlers import ContractError, ShapeMismatchError
from scoreag.diffcore.tensor import Tensor

# Set up logger
logger = logging.getLogger(__name__)

WeightSet = Literal["live", "ema"]


class Module:
    """Base class for networks with live and EMA parameter sets."""

    model_kind = "module"

    def __init__(self, input_shape: Sequence[int], num_classes: int):
        self.input_shape: Tuple[int, ...] = tuple(int(s) for s in input_shape)
        self.num_classes = int(num_classes)
        self.params: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self.ema: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self.weights: WeightSet = "ema"

    # Parameter bookkeeping

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = np.asarray(value, dtype=np.float64)

    def reset_ema(self) -> None:
        self.ema = OrderedDict((k, v.copy()) for k, v in self.params.items())

    @property
    def names(self) -> List[str]:
        return list(self.params.keys())

    @property
    def shapes(self) -> List[Tuple[int, ...]]:
        return [v.shape for v in self.params.values()]

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def param_list(self, which: WeightSet = "live") -> List[np.ndarray]:
        source = self.params if which == "live" else self.ema
        return list(source.values())

    def set_params(self, values: Sequence[np.ndarray], which: WeightSet = "live") -> None:
        """Replace one parameter set, keeping names and shapes."""
        if len(values) != len(self.params):
            raise ContractError(f"Expected {len(self.params)} buffers, got {len(values)}", "set_params")
        target: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for (name, current), value in zip(self.params.items(), values):
            value = np.asarray(value, dtype=np.float64)
            if value.shape != current.shape:
                raise ShapeMismatchError(f"param:{name}", [current.shape, value.shape])
            target[name] = value
        if which == "live":
            self.params = target
        else:
            self.ema = target

    def tensors(self, which: Optional[WeightSet] = None, requires_grad: bool = False) -> Dict[str, Tensor]:
        """Wrap one parameter set as tensors; ``which`` defaults to ``self.weights``."""
        which = which or self.weights
        source = self.params if which == "live" else self.ema
        if not source:
            raise ContractError(f"{self.model_kind} has no '{which}' weights", "tensors")
        # Parameter arrays are replaced, never mutated
        return {name: Tensor._wrap(value, requires_grad, name) for name, value in source.items()}

    def use_weights(self, which: WeightSet) -> "Module":
        self.weights = which
        return self

    # Shape helpers

    def batch_view(self, x: np.ndarray, op: str) -> Tuple[np.ndarray, bool]:
        """
        Accept one sample or a batch; return a batch and whether it was single.

        Raises:
            ShapeMismatchError: If trailing dims do not match the model input shape
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            return x[None, ...], True
        if x.ndim == len(self.input_shape) + 1 and x.shape[1:] == self.input_shape:
            return x, False
        raise ShapeMismatchError(op, [x.shape, self.input_shape])

    def check_batch(self, x: Tensor, op: str) -> None:
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(op, [x.shape, (-1,) + self.input_shape])

    # Serialisation hooks

    def config_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def header(self) -> Dict[str, Any]:
        return {
            "model_kind": self.model_kind,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "names": self.names,
            "shapes": [list(s) for s in self.shapes],
            "config": self.config_dict(),
        }


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, scale: float = 1.0) -> np.ndarray:
    std = scale * np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def he_conv(rng: np.random.Generator, out_ch: int, in_ch: int, k: int) -> np.ndarray:
    std = np.sqrt(2.0 / (in_ch * k * k))
    return rng.normal(0.0, std, size=(out_ch, in_ch, k, k))
