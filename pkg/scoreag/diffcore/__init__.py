"""Dense float64 arrays with reverse-mode differentiation."""

from scoreag.diffcore.graph import Graph, Node, backward, forward, value_and_grad
from scoreag.diffcore.optim import NesterovSGD, cyclic_cosine_lr, ema_update, sgd_nesterov_step
from scoreag.diffcore.tensor import Tensor, as_tensor, gradients

__all__ = [
    "Graph",
    "Node",
    "NesterovSGD",
    "Tensor",
    "as_tensor",
    "backward",
    "cyclic_cosine_lr",
    "ema_update",
    "forward",
    "gradients",
    "sgd_nesterov_step",
    "value_and_grad",
]
