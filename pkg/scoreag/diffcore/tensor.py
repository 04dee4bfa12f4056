"""
Tensor type and the reverse-mode differentiation engine.

Tensors wrap read-only float64 numpy arrays. Differentiable operations (see
``scoreag.diffcore.ops``) attach their parents and a backward closure to the
tensor they produce; ``gradients`` walks that record in reverse creation order.
Every tensor gets a monotonically increasing id at construction, and parents
always exist before their children, so sorting by id is a topological order.
"""

import itertools
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from scoreag.core.exception_handlers import ContractError, NumericOverflowError, ShapeMismatchError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_ids = itertools.count()


class Tensor:
    """Immutable dense float64 array that can take part in differentiation."""

    __slots__ = ("_data", "requires_grad", "grad", "op", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        array = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise NumericOverflowError(op, f"Tensor construction rejected non-finite values ({op})")
        array.setflags(write=False)
        self._init(array, requires_grad, op, (), None)

    def _init(
        self,
        array: np.ndarray,
        requires_grad: bool,
        op: str,
        parents: Tuple["Tensor", ...],
        backward: Optional[BackwardFn],
    ) -> None:
        self._data = array
        self.requires_grad = requires_grad
        self.grad: Optional["Tensor"] = None
        self.op = op
        self._parents = parents
        self._backward = backward
        self._id = next(_ids)

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False, op: str = "leaf") -> "Tensor":
        """Build a leaf around an array the caller will never mutate again."""
        if array.dtype != np.float64:
            array = array.astype(np.float64)
        if array.flags.writeable:
            array.setflags(write=False)
        tensor = cls.__new__(cls)
        tensor._init(array, requires_grad, op, (), None)
        return tensor

    @classmethod
    def _from_op(
        cls,
        array: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        if not np.all(np.isfinite(array)):
            raise NumericOverflowError(op)
        array = np.asarray(array, dtype=np.float64)
        array.setflags(write=False)
        tensor = cls.__new__(cls)
        if any(p.requires_grad for p in parents):
            tensor._init(array, True, op, tuple(parents), backward)
        else:
            tensor._init(array, False, op, (), None)
        return tensor

    # Array views

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def parents(self) -> Tuple["Tensor", ...]:
        return self._parents

    def numpy(self) -> np.ndarray:
        """Return a writable copy of the values."""
        return np.array(self._data)

    def item(self) -> float:
        if self._data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}", "item")
        return float(self._data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor._wrap(self._data, False, "detach")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # Operator sugar, implemented in ops

    def __add__(self, other):
        from scoreag.diffcore import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from scoreag.diffcore import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from scoreag.diffcore import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from scoreag.diffcore import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from scoreag.diffcore import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from scoreag.diffcore import ops
        return ops.mul(other, self)

    def __neg__(self):
        from scoreag.diffcore import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from scoreag.diffcore import ops
        return ops.matmul(self, other)


def as_tensor(value) -> Tensor:
    """Lift arrays and python numbers to constant tensors."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _reachable(seed: Tensor) -> List[Tensor]:
    seen: Dict[int, Tensor] = {}
    stack = [seed]
    while stack:
        node = stack.pop()
        if node._id in seen or not node.requires_grad:
            continue
        seen[node._id] = node
        stack.extend(node._parents)
    return sorted(seen.values(), key=lambda n: n._id, reverse=True)


def gradients(seed: Tensor, wrt: Sequence[Tensor]) -> List[np.ndarray]:
    """
    Reverse pass from a scalar seed.

    Args:
        seed: Single-element tensor to differentiate
        wrt: Tensors to return gradients for

    Returns:
        One array per ``wrt`` entry, shaped like it; inputs the seed does not
        depend on get zeros.

    Raises:
        ContractError: If the seed is not scalar-valued
    """
    if seed.size != 1:
        raise ContractError(f"Backward seed must be scalar, got shape {seed.shape}", "backward")

    keep = {w._id for w in wrt}
    grads: Dict[int, np.ndarray] = {}
    if seed.requires_grad:
        grads[seed._id] = np.ones(seed.shape)

    for node in _reachable(seed):
        g = grads.get(node._id)
        if g is None:
            continue
        if node._backward is not None:
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise ShapeMismatchError(node.op, [pg.shape, parent.shape],
                                             f"Gradient shape mismatch flowing out of '{node.op}'")
                existing = grads.get(parent._id)
                grads[parent._id] = pg if existing is None else existing + pg
            if node._id not in keep:
                del grads[node._id]

    return [np.array(grads[w._id]) if w._id in grads else np.zeros(w.shape) for w in wrt]
