"""
Finite-difference verification of the reverse pass.

Runs a fixed set of per-primitive checks plus randomly composed graphs and
compares every gradient coordinate against central differences.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from scoreag.diffcore import ops
from scoreag.diffcore.graph import value_and_grad
from scoreag.diffcore.tensor import Tensor

# Set up logger
logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
# Denominator floor of the relative error; below it the check is absolute
REL_ERROR_FLOOR = 1e-3

ScalarFn = Callable[..., Tensor]


@dataclass
class CaseResult:
    name: str
    max_rel_error: float
    max_abs_error: float = 0.0


@dataclass
class GradcheckReport:
    tolerance: float
    floor: float = REL_ERROR_FLOOR
    cases: List[CaseResult] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.cases), default=0.0)

    @property
    def failures(self) -> List[CaseResult]:
        return [c for c in self.cases if not c.max_rel_error < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "n_cases": len(self.cases),
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "rel_error_floor": self.floor,
            "max_abs_error": max((c.max_abs_error for c in self.cases), default=0.0),
            "passed": self.passed,
            "failures": [c.name for c in self.failures],
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_ERROR_FLOOR) -> np.ndarray:
    """Coordinate-wise ``|a - n| / max(|a|, |n|, floor)``."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(fn: ScalarFn, args: Sequence[np.ndarray], index: int, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of ``fn`` with respect to ``args[index]``."""
    base = [np.array(a, dtype=np.float64) for a in args]
    target = base[index]
    grad = np.zeros_like(target)
    for pos in np.ndindex(target.shape):
        original = target[pos]
        target[pos] = original + h
        plus = fn(*[Tensor(a) for a in base]).item()
        target[pos] = original - h
        minus = fn(*[Tensor(a) for a in base]).item()
        target[pos] = original
        grad[pos] = (plus - minus) / (2.0 * h)
    return grad


def check_case(name: str, fn: ScalarFn, args: Sequence[np.ndarray], h: float = DEFAULT_STEP) -> CaseResult:
    """Compare reverse-mode and numeric gradients for every argument."""
    _, grads = value_and_grad(fn, list(args))
    worst = worst_abs = 0.0
    for i, analytic in enumerate(grads):
        numeric = numeric_gradient(fn, args, i, h)
        if analytic.size:
            worst = max(worst, float(relative_error(analytic, numeric).max()))
            worst_abs = max(worst_abs, float(np.abs(analytic - numeric).max()))
    return CaseResult(name=name, max_rel_error=worst, max_abs_error=worst_abs)


def _away_from_zero(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    # Keeps relu inputs off its kink
    return rng.uniform(0.2, 1.5, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def primitive_cases(rng: np.random.Generator) -> List[Tuple[str, ScalarFn, List[np.ndarray]]]:
    """One check per primitive, each reduced to a scalar."""
    n, d, k = 3, 4, 5
    x = rng.normal(size=(n, d))
    v = rng.normal(size=d)
    W = rng.normal(size=(d, k)) * 0.5
    b = rng.normal(size=k)
    targets = rng.integers(0, k, size=n)
    weights = rng.normal(size=n)
    img = rng.normal(size=(2, 2, 4, 4))
    kern = rng.normal(size=(3, 2, 3, 3)) * 0.3
    kb = rng.normal(size=3)

    return [
        ("add", lambda a, c: ops.sum(ops.square(a + c)), [x, v]),
        ("sub", lambda a, c: ops.sum(ops.square(a - c)), [x, rng.normal(size=(n, d))]),
        ("mul", lambda a, c: ops.sum(a * c), [x, rng.normal(size=(n, d))]),
        ("scale_rows", lambda a: ops.sum(ops.square(ops.scale_rows(a, weights))), [x]),
        ("matmul", lambda a, c: ops.sum(ops.tanh(a @ c)), [x, W]),
        ("affine", lambda a, w, c: ops.sum(ops.tanh(ops.affine(a, w, c))), [x, W, b]),
        ("affine_vector", lambda a, w, c: ops.sum(ops.silu(ops.affine(a, w, c))), [v, W, b]),
        ("relu", lambda a: ops.sum(ops.square(ops.relu(a))), [_away_from_zero(rng, (n, d))]),
        ("tanh", lambda a: ops.sum(ops.tanh(a)), [x]),
        ("silu", lambda a: ops.sum(ops.silu(a)), [x]),
        ("exp", lambda a: ops.sum(ops.exp(a)), [x]),
        ("sum_axis", lambda a: ops.sum(ops.square(ops.sum(a, axis=1))), [x]),
        ("mean", lambda a: ops.mean(ops.square(a)), [x]),
        ("log_softmax", lambda a: ops.sum(ops.take(ops.log_softmax(a), targets)), [rng.normal(size=(n, k))]),
        ("softmax_cross_entropy", lambda a: ops.softmax_cross_entropy(a, targets), [rng.normal(size=(n, k))]),
        ("squared_error_sum", lambda a, c: ops.squared_error(a, c), [x, rng.normal(size=(n, d))]),
        ("squared_error_row", lambda a, c: ops.sum(ops.tanh(ops.squared_error(a, c, "row"))),
         [x, rng.normal(size=(n, d))]),
        ("concat", lambda a, c: ops.sum(ops.tanh(ops.concat([a, c], axis=1))), [x, rng.normal(size=(n, 2))]),
        ("slice", lambda a: ops.sum(ops.square(ops.slice_(a, (slice(None), slice(1, 3))))), [x]),
        ("reshape", lambda a: ops.sum(ops.tanh(ops.reshape(a, (d, n)) @ Tensor(W[:n]))), [x]),
        ("broadcast", lambda a: ops.sum(ops.tanh(ops.broadcast(a, 3) * Tensor(x))), [v]),
        ("take_rows", lambda t: ops.sum(ops.square(ops.take_rows(t, [0, 2, 2]))), [rng.normal(size=(4, d))]),
        ("conv2d", lambda a, w, c: ops.sum(ops.tanh(ops.conv2d(a, w, c))), [img, kern, kb]),
        ("avg_pool2d", lambda a: ops.sum(ops.square(ops.avg_pool2d(a))), [img]),
    ]


_NONLINEAR = ("tanh", "silu", "exp_tanh", "square_scaled")


def _activate(kind: str, t: Tensor) -> Tensor:
    if kind == "tanh":
        return ops.tanh(t)
    if kind == "silu":
        return ops.silu(t)
    if kind == "exp_tanh":
        return ops.exp(ops.tanh(t))
    return ops.square(t) * 0.25


def random_case(rng: np.random.Generator, index: int) -> Tuple[str, ScalarFn, List[np.ndarray]]:
    """
    Build a random composed graph with dimensions at most 8.

    The graph takes an input batch and a list of layer parameters and chains
    affine maps, smooth nonlinearities, residual products, concatenation and
    slicing before a randomly chosen scalar reduction.
    """
    n = int(rng.integers(1, 5))
    d = int(rng.integers(1, 9))
    depth = int(rng.integers(1, 4))
    args: List[np.ndarray] = [rng.normal(size=(n, d))]
    plan = []
    width = d
    for _ in range(depth):
        out = int(rng.integers(1, 9))
        kind = str(rng.choice(_NONLINEAR))
        extra = str(rng.choice(["none", "residual", "concat", "slice"]))
        args.append(rng.normal(size=(width, out)) / np.sqrt(width))
        args.append(rng.normal(size=out) * 0.1)
        plan.append((kind, extra, out))
        width = out
        if extra == "concat":
            width = 2 * out
        elif extra == "slice" and out > 1:
            width = out - 1
    reduction = str(rng.choice(["sum", "mean", "cross_entropy", "squared_error"]))
    targets = rng.integers(0, width, size=n)
    reference = rng.normal(size=(n, width))

    def fn(x: Tensor, *layer_params: Tensor) -> Tensor:
        h = x
        for j, (kind, extra, out) in enumerate(plan):
            z = _activate(kind, ops.affine(h, layer_params[2 * j], layer_params[2 * j + 1]))
            if extra == "residual":
                z = z * ops.tanh(z) + z
            elif extra == "concat":
                z = ops.concat([z, ops.tanh(z)], axis=1)
            elif extra == "slice" and out > 1:
                z = ops.slice_(z, (slice(None), slice(1, None)))
            h = z
        if reduction == "sum":
            return ops.sum(h)
        if reduction == "mean":
            return ops.mean(ops.square(h))
        if reduction == "cross_entropy":
            return ops.softmax_cross_entropy(h, targets)
        return ops.squared_error(h, Tensor(reference), "mean")

    desc = f"random[{index}] n={n} d={d} depth={depth} reduction={reduction}"
    return desc, fn, args


def run_suite(seed: int = 0, n_random: int = 100, tolerance: float = DEFAULT_TOLERANCE) -> GradcheckReport:
    """
    Run the primitive checks and ``n_random`` random composed-graph checks.

    Args:
        seed: Seed for inputs and graph structure
        n_random: Number of random graphs
        tolerance: Maximum admissible relative error

    Returns:
        Report with the worst relative error per case
    """
    rng = np.random.default_rng(seed)
    report = GradcheckReport(tolerance=tolerance)
    for name, fn, args in primitive_cases(rng):
        report.cases.append(check_case(name, fn, args))
    for i in range(n_random):
        name, fn, args = random_case(rng, i)
        report.cases.append(check_case(name, fn, args))

    for failure in report.failures:
        logger.warning(f"Gradient check failed for {failure.name}: rel err {failure.max_rel_error:.3e}")
    logger.info(f"Gradient suite: {len(report.cases)} cases, max relative error {report.max_rel_error:.3e} (floor {report.floor:.0e})")
    return report
