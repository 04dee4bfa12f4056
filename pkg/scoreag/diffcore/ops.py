"""
Differentiable primitives.

Each primitive computes its value with numpy, checks it is finite (naming the
node on failure) and, when any input requires a gradient, records a backward
closure mapping the output gradient to one gradient per parent.

Broadcasting is limited to python scalars and to a missing leading batch
dimension: a tensor of shape ``s`` combines with one of shape ``(n, *s)``.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from scoreag.core.exception_handlers import ContractError, ShapeMismatchError
from scoreag.diffcore.tensor import Tensor, as_tensor

Operand = Union[Tensor, float, int, np.ndarray]


def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    if a.ndim == b.ndim + 1 and a.shape[1:] == b.shape:
        return
    if b.ndim == a.ndim + 1 and b.shape[1:] == a.shape:
        return
    raise ShapeMismatchError(op, [a.shape, b.shape])


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    return grad.sum(axis=0)


# Elementwise arithmetic

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def scale_rows(x: Tensor, weights: np.ndarray) -> Tensor:
    """Multiply sample ``i`` of a batch by the constant ``weights[i]``."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or x.ndim < 1 or w.shape[0] != x.shape[0]:
        raise ShapeMismatchError("scale_rows", [x.shape, w.shape])
    w = w.reshape((-1,) + (1,) * (x.ndim - 1))

    def backward(g):
        return (g * w,)

    return Tensor._from_op(x.data * w, (x,), backward, "scale_rows")


# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", [a.shape, b.shape])

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "matmul")


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight + bias`` for a single vector or a batch of rows."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if (
        weight.ndim != 2
        or x.ndim not in (1, 2)
        or x.shape[-1] != weight.shape[0]
        or bias.shape != (weight.shape[1],)
    ):
        raise ShapeMismatchError("affine", [x.shape, weight.shape, bias.shape])
    rows = x.data if x.ndim == 2 else x.data[None, :]

    def backward(g):
        g_rows = g if g.ndim == 2 else g[None, :]
        gx = (g_rows @ weight.data.T).reshape(x.shape)
        return gx, rows.T @ g_rows, g_rows.sum(axis=0)

    out = rows @ weight.data + bias.data
    return Tensor._from_op(out.reshape(x.shape[:-1] + (weight.shape[1],)), (x, weight, bias), backward, "affine")


# Elementwise nonlinearities

def relu(x: Tensor) -> Tensor:
    # relu'(0) is taken as 0
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return Tensor._from_op(np.where(mask, x.data, 0.0), (x,), backward, "relu")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor._from_op(out, (x,), backward, "tanh")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def backward(g):
        return (g * (s + x.data * s * (1.0 - s)),)

    return Tensor._from_op(x.data * s, (x,), backward, "silu")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return Tensor._from_op(out, (x,), backward, "exp")


def square(x: Tensor) -> Tensor:
    def backward(g):
        return (2.0 * x.data * g,)

    return Tensor._from_op(x.data * x.data, (x,), backward, "square")


# Reductions

def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    if axis is None:
        def backward(g):
            return (np.full(x.shape, float(g)),)

        return Tensor._from_op(np.asarray(x.data.sum()), (x,), backward, "sum")

    def backward_axis(g):
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return Tensor._from_op(x.data.sum(axis=axis), (x,), backward_axis, "sum")


def mean(x: Tensor) -> Tensor:
    x = as_tensor(x)
    n = x.size
    if n == 0:
        raise ContractError("mean of an empty tensor", "mean")

    def backward(g):
        return (np.full(x.shape, float(g) / n),)

    return Tensor._from_op(np.asarray(x.data.mean()), (x,), backward, "mean")


# Classification heads

def _as_rows(logits: Tensor, op: str) -> np.ndarray:
    if logits.ndim == 1:
        return logits.data[None, :]
    if logits.ndim == 2:
        return logits.data
    raise ShapeMismatchError(op, [logits.shape])


def _check_targets(targets, n: int, k: int, op: str) -> np.ndarray:
    idx = np.asarray(targets, dtype=np.int64).reshape(-1)
    if idx.shape[0] != n:
        raise ShapeMismatchError(op, [(n, k), idx.shape])
    if np.any(idx < 0) or np.any(idx >= k):
        raise ContractError(f"Target index out of range [0, {k})", op)
    return idx


def log_softmax(logits: Tensor) -> Tensor:
    rows = _as_rows(logits, "log_softmax")
    shifted = rows - rows.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        g_rows = g.reshape(rows.shape)
        return ((g_rows - probs * g_rows.sum(axis=1, keepdims=True)).reshape(logits.shape),)

    return Tensor._from_op(out.reshape(logits.shape), (logits,), backward, "log_softmax")


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of rows of logits against integer class indices."""
    rows = _as_rows(logits, "softmax_cross_entropy")
    n, k = rows.shape
    idx = _check_targets(targets, n, k, "softmax_cross_entropy")
    shifted = rows - rows.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    losses = log_norm - shifted[np.arange(n), idx]

    def backward(g):
        probs = np.exp(shifted - log_norm[:, None])
        probs[np.arange(n), idx] -= 1.0
        return ((float(g) / n * probs).reshape(logits.shape),)

    return Tensor._from_op(np.asarray(losses.mean()), (logits,), backward, "softmax_cross_entropy")


def take(x: Tensor, indices) -> Tensor:
    """Pick ``x[i, indices[i]]`` from every row."""
    if x.ndim != 2:
        raise ShapeMismatchError("take", [x.shape])
    n, k = x.shape
    idx = _check_targets(indices, n, k, "take")
    rows = np.arange(n)

    def backward(g):
        gx = np.zeros(x.shape)
        gx[rows, idx] = g
        return (gx,)

    return Tensor._from_op(x.data[rows, idx], (x,), backward, "take")


def squared_error(a: Operand, b: Operand, reduction: str = "sum") -> Tensor:
    """
    Squared difference of two same-shape tensors.

    ``reduction`` is ``"sum"`` (scalar), ``"mean"`` (scalar) or ``"row"``
    (one sum per leading-axis sample).
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError("squared_error", [a.shape, b.shape])
    diff = a.data - b.data
    sq = diff * diff

    if reduction == "sum":
        out = np.asarray(sq.sum())

        def backward(g):
            d = 2.0 * float(g) * diff
            return d, -d
    elif reduction == "mean":
        n = diff.size
        out = np.asarray(sq.mean())

        def backward(g):
            d = 2.0 * float(g) / n * diff
            return d, -d
    elif reduction == "row":
        if a.ndim < 1:
            raise ShapeMismatchError("squared_error", [a.shape])
        out = sq.reshape(a.shape[0], -1).sum(axis=1)

        def backward(g):
            d = 2.0 * g.reshape((-1,) + (1,) * (a.ndim - 1)) * diff
            return d, -d
    else:
        raise ContractError(f"Unknown reduction '{reduction}'", "squared_error")

    return Tensor._from_op(out, (a, b), backward, "squared_error")


# Structural operations

def concat(tensors: Sequence[Operand], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat needs at least one tensor", "concat")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", [p.shape for p in parts])
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(out, tuple(parts), backward, "concat")


def slice_(x: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing; advanced indexing is not supported."""
    if not isinstance(index, tuple):
        index = (index,)
    if any(not isinstance(i, (slice, int)) for i in index):
        raise ContractError("slice_ accepts only ints and slices", "slice")
    out = x.data[index]

    def backward(g):
        gx = np.zeros(x.shape)
        gx[index] = g
        return (gx,)

    return Tensor._from_op(np.array(out), (x,), backward, "slice")


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", [x.shape, tuple(shape)])

    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor._from_op(out, (x,), backward, "reshape")


def flatten(x: Tensor) -> Tensor:
    """Collapse everything but the leading batch axis."""
    return reshape(x, (x.shape[0], -1))


def broadcast(x: Tensor, n: int) -> Tensor:
    """Repeat ``x`` along a new leading batch axis of length ``n``."""
    if n < 1:
        raise ContractError("broadcast batch size must be positive", "broadcast")
    out = np.broadcast_to(x.data, (n,) + x.shape).copy()

    def backward(g):
        return (g.sum(axis=0),)

    return Tensor._from_op(out, (x,), backward, "broadcast")


def take_rows(table: Tensor, indices) -> Tensor:
    """Embedding lookup: rows of ``table`` selected by integer ``indices``."""
    if table.ndim != 2:
        raise ShapeMismatchError("take_rows", [table.shape])
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if np.any(idx < 0) or np.any(idx >= table.shape[0]):
        raise ContractError(f"Row index out of range [0, {table.shape[0]})", "take_rows")

    def backward(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor._from_op(table.data[idx], (table,), backward, "take_rows")


def stop_gradient(x: Tensor) -> Tensor:
    return x.detach()


# Convolutional layers

def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 'same' convolution with an odd square kernel, NCHW layout."""
    if (
        x.ndim != 4
        or weight.ndim != 4
        or weight.shape[1] != x.shape[1]
        or weight.shape[2] != weight.shape[3]
        or weight.shape[2] % 2 == 0
        or bias.shape != (weight.shape[0],)
    ):
        raise ShapeMismatchError("conv2d", [x.shape, weight.shape, bias.shape])
    k = weight.shape[2]
    p = k // 2
    _, _, h, w = x.shape
    padded = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + bias.data[None, :, None, None]

    def backward(g):
        g_weight = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        g_bias = g.sum(axis=(0, 2, 3))
        g_padded = np.pad(g, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        g_windows = sliding_window_view(g_padded, (k, k), axis=(2, 3))
        flipped = weight.data[:, :, ::-1, ::-1]
        g_full = np.tensordot(g_windows, flipped, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        return g_full[:, :, p:p + h, p:p + w], g_weight, g_bias

    return Tensor._from_op(np.ascontiguousarray(out), (x, weight, bias), backward, "conv2d")


def avg_pool2d(x: Tensor) -> Tensor:
    """Non-overlapping 2x2 average pooling, NCHW layout."""
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeMismatchError("avg_pool2d", [x.shape])
    n, c, h, w = x.shape
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g):
        spread = np.broadcast_to(g[:, :, :, None, :, None] / 4.0, (n, c, h // 2, 2, w // 2, 2))
        return (spread.reshape(x.shape),)

    return Tensor._from_op(out, (x,), backward, "avg_pool2d")
