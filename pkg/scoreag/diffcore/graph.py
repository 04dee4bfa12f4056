"""
Named-input computation graphs.

A ``Graph`` wraps a function from named tensors to named tensors. Graphs are
define-by-run: every ``forward`` call re-traces the function, records the
primitive nodes it produced and keeps them for a following ``backward``.
A graph instance holds per-call state and must stay confined to one worker.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from scoreag.core.exception_handlers import ContractError
from scoreag.diffcore.tensor import Tensor, as_tensor, gradients

# Set up logger
logger = logging.getLogger(__name__)

GraphFn = Callable[[Dict[str, Tensor]], Dict[str, Tensor]]


@dataclass(frozen=True)
class Node:
    """One recorded primitive: its op name, output shape and parent positions."""

    op: str
    shape: Tuple[int, ...]
    parents: Tuple[int, ...]


class Graph:
    """Traceable function of named tensor inputs."""

    def __init__(self, fn: GraphFn, name: str = "graph"):
        self.fn = fn
        self.name = name
        self.nodes: List[Node] = []
        self._inputs: Dict[str, Tensor] = {}
        self._outputs: Dict[str, Tensor] = {}

    def forward(self, inputs: Mapping[str, object]) -> Dict[str, Tensor]:
        """
        Trace the graph on the given inputs.

        Args:
            inputs: Input name to tensor (arrays and numbers are lifted to constants)

        Returns:
            Output name to tensor
        """
        bound = {name: as_tensor(value) for name, value in inputs.items()}
        outputs = self.fn(dict(bound))
        if not isinstance(outputs, Mapping):
            raise ContractError(f"Graph '{self.name}' must return a mapping of outputs", "forward")
        self._inputs = bound
        self._outputs = {name: as_tensor(value) for name, value in outputs.items()}
        self.nodes = _record(list(self._outputs.values()))
        logger.debug(f"Traced graph '{self.name}' with {len(self.nodes)} nodes")
        return dict(self._outputs)

    def backward(self, seed_output: str) -> Dict[str, Tensor]:
        """
        Differentiate one scalar output with respect to every input that
        requires a gradient.

        Args:
            seed_output: Name of a scalar output of the last forward call

        Returns:
            Input name to gradient tensor; unused inputs get zero tensors

        Raises:
            ContractError: If forward was not run, the output is unknown or not scalar
        """
        if not self._outputs:
            raise ContractError(f"Graph '{self.name}' has no forward trace", "backward")
        if seed_output not in self._outputs:
            raise ContractError(f"Unknown output '{seed_output}'", "backward")

        names = [n for n, t in self._inputs.items() if t.requires_grad]
        grads = gradients(self._outputs[seed_output], [self._inputs[n] for n in names])
        result = {}
        for name, grad in zip(names, grads):
            result[name] = Tensor._wrap(grad, op="grad")
            self._inputs[name].grad = result[name]
        return result


def _record(outputs: List[Tensor]) -> List[Node]:
    """List the nodes behind ``outputs`` parents-first."""
    seen: Dict[int, Tensor] = {}
    stack = list(outputs)
    while stack:
        t = stack.pop()
        if t._id in seen:
            continue
        seen[t._id] = t
        stack.extend(t.parents)
    ordered = sorted(seen.values(), key=lambda t: t._id)
    position = {t._id: i for i, t in enumerate(ordered)}
    return [Node(t.op, t.shape, tuple(position[p._id] for p in t.parents)) for t in ordered]


def forward(graph: Graph, inputs: Mapping[str, object]) -> Dict[str, Tensor]:
    return graph.forward(inputs)


def backward(graph: Graph, seed_output: str) -> Dict[str, Tensor]:
    return graph.backward(seed_output)


def value_and_grad(
    fn: Callable[..., Tensor],
    args: List[np.ndarray],
    argnums: Optional[List[int]] = None,
) -> Tuple[float, List[np.ndarray]]:
    """
    Evaluate a scalar function of arrays and its gradient.

    Args:
        fn: Function of tensors returning a single-element tensor
        args: Array arguments; those in ``argnums`` become differentiable leaves
        argnums: Positions to differentiate (all by default)

    Returns:
        The function value and one gradient array per position in ``argnums``
    """
    argnums = list(range(len(args))) if argnums is None else argnums
    leaves = [Tensor(a, requires_grad=i in argnums) for i, a in enumerate(args)]
    out = fn(*leaves)
    return out.item(), gradients(out, [leaves[i] for i in argnums])
