"""
Guided reverse-time sampling.

The base score ``s_theta(x, t, y*)`` is combined with guidance terms that are
differentiated through the one-step Euler prediction

    x_hat0 = x - t * dx/dt,    dx/dt = -1/2 beta(t) (x + s_theta(x, t, y*))

(the probability-flow drift). The guided score is integrated backwards in time
with Euler-Maruyama, or deterministically along the probability-flow ODE.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from scoreag.core.exception_handlers import (
    ContractError,
    GuidanceDivergedError,
    InvalidSpecError,
    NumericOverflowError,
    SamplerDivergedError,
)
from scoreag.diffcore import ops
from scoreag.diffcore.tensor import Tensor, as_tensor, gradients
from scoreag.diffusion.vpsde import beta
from scoreag.models.classifier import Classifier
from scoreag.models.score_model import Labels, ScoreFunction
from scoreag.schemas.config import SamplerConfig
from scoreag.schemas.results import TrajectoryRow

# Set up logger
logger = logging.getLogger(__name__)


# Guidance terms

@dataclass
class ClassifierTarget:
    """
    Pull ``f(x_hat0)`` towards ``target_class`` with strength ``scale``.

    Without a target class the runner-up class (highest logit other than the
    true class) is re-selected at every evaluation.
    """

    classifier: Classifier
    scale: float
    target_class: Optional[int] = None
    true_class: Labels = None

    name = "classifier_target"


@dataclass
class Reconstruction:
    """Gaussian observation of ``reference`` centred at ``x_hat0``, strength ``scale``."""

    reference: np.ndarray
    scale: float

    name = "reconstruction"


GuidanceTerm = Union[ClassifierTarget, Reconstruction]


@dataclass
class GuidanceSpec:
    terms: List[GuidanceTerm] = field(default_factory=list)
    class_condition: Labels = None

    def validate(self, model: ScoreFunction) -> None:
        """
        Raises:
            InvalidSpecError: For negative scales, several references, mismatched
                shapes or a target class equal to the true class
        """
        n_recon = 0
        for term in self.terms:
            if not term.scale >= 0:
                raise InvalidSpecError(f"Guidance scale must be non-negative, got {term.scale}", term.name)
            if isinstance(term, Reconstruction):
                n_recon += 1
                ref = np.asarray(term.reference)
                if ref.shape != tuple(model.input_shape) and ref.shape[1:] != tuple(model.input_shape):
                    raise InvalidSpecError(
                        f"Reference shape {ref.shape} does not match model input {model.input_shape}", "reference"
                    )
            elif isinstance(term, ClassifierTarget):
                if term.classifier is None:
                    raise InvalidSpecError("classifier_target needs a trained classifier", "classifier")
                if tuple(term.classifier.input_shape) != tuple(model.input_shape):
                    raise InvalidSpecError(
                        f"Classifier input {term.classifier.input_shape} does not match model input "
                        f"{model.input_shape}",
                        "classifier",
                    )
                true = term.true_class if term.true_class is not None else self.class_condition
                if term.target_class is not None:
                    if not 1 <= term.target_class <= term.classifier.num_classes:
                        raise InvalidSpecError(f"Target class {term.target_class} out of range", "target_class")
                    if true is not None and np.any(np.asarray(true) == term.target_class):
                        raise InvalidSpecError("Target class must differ from the true class", "target_class")
                elif true is None:
                    raise InvalidSpecError("Untargeted guidance needs the true class", "true_class")
            else:
                raise InvalidSpecError(f"Unknown guidance term {type(term).__name__}", "terms")
        if n_recon > 1:
            raise InvalidSpecError("At most one reconstruction reference is allowed", "terms")


@dataclass
class EulerPrediction:
    x_hat0: Tensor
    t_source: float


@dataclass
class GuidedScore:
    """Guided score for a batch plus the per-term contributions."""

    total: np.ndarray
    base: np.ndarray
    contributions: List[Tuple[str, np.ndarray]] = field(default_factory=list)
    targets: Optional[np.ndarray] = None

    def contribution_norm(self, name: str) -> float:
        """Mean per-sample l2 norm of all contributions of one term kind."""
        parts = [c for n, c in self.contributions if n == name]
        if not parts:
            return 0.0
        return _mean_norm(np.sum(parts, axis=0))


@dataclass
class TrajectorySummary:
    rows: List[TrajectoryRow] = field(default_factory=list)
    n_steps: int = 0
    kind: str = "reverse-sde"


def _mean_norm(v: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(v.reshape(v.shape[0], -1), axis=1)))


# Drift and one-step prediction

def _drift_from_score(x: Tensor, score: Tensor, t: float, beta_t: float) -> Tensor:
    return ops.mul(ops.add(x, score), -0.5 * beta_t)


def pf_drift(model: ScoreFunction, x, t: float, y_opt: Labels = None) -> Tensor:
    """
    Probability-flow drift ``-1/2 beta(t) x - 1/2 beta(t) s_theta(x, t, y)``.

    This is dx/dt of the deterministic flow sharing the diffusion's marginals.
    """
    x = as_tensor(x)
    return _drift_from_score(x, model.score(x, t, y_opt), t, beta(model.schedule, t))


def _euler_from_score(x: Tensor, score: Tensor, t: float, beta_t: float, stop_gradient: bool) -> EulerPrediction:
    if stop_gradient:
        score = ops.stop_gradient(score)
    drift = _drift_from_score(x, score, t, beta_t)
    return EulerPrediction(x_hat0=ops.sub(x, ops.mul(drift, t)), t_source=t)


def euler_x0(
    model: ScoreFunction,
    x,
    t: float,
    y_opt: Labels = None,
    stop_gradient_through_score: bool = False,
) -> EulerPrediction:
    """
    One-step Euler prediction of the clean sample, ``x - t * pf_drift``.

    With ``stop_gradient_through_score`` the network output is a constant in
    the differentiation graph; the predicted values are unchanged.
    """
    x = as_tensor(x)
    return _euler_from_score(x, model.score(x, t, y_opt), t, beta(model.schedule, t), stop_gradient_through_score)


# Guided score

def _labels_per_sample(labels: Labels, n: int) -> Optional[np.ndarray]:
    if labels is None:
        return None
    arr = np.asarray(labels, dtype=np.int64)
    return np.full(n, int(arr)) if arr.ndim == 0 else arr


def runner_up(logits: np.ndarray, true_class: np.ndarray) -> np.ndarray:
    """Highest-logit class other than the true class per row (1-based, ties to lowest index)."""
    masked = np.array(logits, dtype=np.float64)
    masked[np.arange(masked.shape[0]), true_class - 1] = -np.inf
    return np.argmax(masked, axis=1) + 1


def _classifier_objective(term: ClassifierTarget, x_hat0: Tensor, true: Optional[np.ndarray]):
    logits, _ = term.classifier.forward_with(term.classifier.tensors(), x_hat0)
    n = logits.shape[0]
    if term.target_class is not None:
        targets = np.full(n, term.target_class, dtype=np.int64)
    else:
        targets = runner_up(logits.data, true)
    return ops.sum(ops.take(ops.log_softmax(logits), targets - 1)), targets


def guided_score(
    model: ScoreFunction,
    guidance: GuidanceSpec,
    x: np.ndarray,
    t: float,
    stop_gradient_through_score: bool = False,
    step: int = 0,
) -> GuidedScore:
    """
    Base score plus scaled guidance gradients for a batch.

    Each term's gradient is taken separately through the one-step Euler
    prediction; terms with zero scale are skipped, so an all-zero spec
    returns exactly the base score.

    Args:
        model: Score function providing ``s_theta``
        guidance: Terms and optional class condition
        x: Batch of states shaped ``(n, *input_shape)``
        t: Current diffusion time
        stop_gradient_through_score: Treat the network output in ``x_hat0`` as constant
        step: Solver step, for diagnostics

    Returns:
        The guided score and its components

    Raises:
        GuidanceDivergedError: If a guidance gradient is not finite
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    active = [term for term in guidance.terms if term.scale != 0]
    y_star = guidance.class_condition

    if not active:
        base = model.score(Tensor._wrap(np.array(x)), t, y_star).numpy()
        return GuidedScore(total=base, base=base)

    xt = Tensor(x, requires_grad=True)
    score = model.score(xt, t, y_star)
    base = score.numpy()
    pred = _euler_from_score(xt, score, t, beta(model.schedule, t), stop_gradient_through_score)

    total = base.copy()
    contributions: List[Tuple[str, np.ndarray]] = []
    chosen = None
    for term in active:
        try:
            if isinstance(term, ClassifierTarget):
                true = _labels_per_sample(term.true_class if term.true_class is not None else y_star, n)
                objective, chosen = _classifier_objective(term, pred.x_hat0, true)
            else:
                ref = np.asarray(term.reference, dtype=np.float64)
                if ref.shape == tuple(model.input_shape):
                    ref = np.broadcast_to(ref, x.shape)
                objective = ops.mul(ops.squared_error(pred.x_hat0, Tensor(ref), "sum"), -0.5)
            (grad,) = gradients(objective, [xt])
        except NumericOverflowError:
            raise GuidanceDivergedError(step, t, term.name)
        contribution = term.scale * grad
        if not np.all(np.isfinite(contribution)):
            raise GuidanceDivergedError(step, t, term.name)
        contributions.append((term.name, contribution))
        total = total + contribution

    return GuidedScore(total=total, base=base, contributions=contributions, targets=chosen)


# Solver

def time_grid(t_start: float, t_end: float, n_steps: int) -> np.ndarray:
    return t_start - (t_start - t_end) * np.arange(n_steps + 1) / n_steps


def solve(
    model: ScoreFunction,
    guidance: GuidanceSpec,
    config: SamplerConfig,
    shape: Sequence[int],
    rng: np.random.Generator,
    x_init: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, TrajectorySummary]:
    """
    Integrate the guided reverse-time dynamics from ``t_start`` to ``t_end``.

    Args:
        model: Score function
        guidance: Guidance terms and class condition
        config: Step count, solver kind and output range
        shape: Batch shape ``(n, *input_shape)``; a bare input shape means n = 1
        rng: Generator for the initial state and the per-step noise
        x_init: Optional initial state replacing the N(0, I) draw

    Returns:
        Final states (clamped to ``output_range`` when set) and the trajectory summary

    Raises:
        SamplerDivergedError: If max |x| exceeds the divergence threshold
    """
    shape = tuple(int(s) for s in shape)
    if shape == tuple(model.input_shape):
        shape = (1,) + shape
    if shape[1:] != tuple(model.input_shape):
        raise ContractError(f"Sample shape {shape} does not match model input {model.input_shape}", "solve")
    t_end = config.resolve_t_end(model.schedule)
    if not config.t_start > t_end >= model.schedule.t_eps:
        raise ContractError(f"Need t_start > t_end >= t_eps, got {config.t_start}, {t_end}", "solve")
    guidance.validate(model)

    sde = config.kind == "reverse-sde"
    grid = time_grid(config.t_start, t_end, config.n_steps)
    dt = (config.t_start - t_end) / config.n_steps
    x = rng.standard_normal(shape) if x_init is None else np.array(x_init, dtype=np.float64).reshape(shape)
    summary = TrajectorySummary(n_steps=config.n_steps, kind=config.kind)

    for k in range(config.n_steps):
        t = float(grid[k])
        b = beta(model.schedule, t)
        guided = guided_score(model, guidance, x, t, config.stop_gradient_through_score, step=k)
        if sde:
            x = x + dt * (0.5 * b * x + b * guided.total) + np.sqrt(b * dt) * rng.standard_normal(shape)
        else:
            x = x + dt * 0.5 * b * (x + guided.total)

        max_abs = float(np.max(np.abs(x)))
        if not np.isfinite(max_abs) or max_abs > config.divergence_threshold:
            raise SamplerDivergedError(k, t, max_abs)

        if k % config.record_every == 0 or k == config.n_steps - 1:
            summary.rows.append(
                TrajectoryRow(
                    step=k,
                    t=t,
                    score_norm=_mean_norm(guided.base),
                    guidance_norm_y=guided.contribution_norm(ClassifierTarget.name),
                    guidance_norm_x=guided.contribution_norm(Reconstruction.name),
                )
            )
        if guided.targets is not None:
            logger.debug(f"step {k} t={t:.4f}: guidance targets {guided.targets.tolist()}")

    if config.output_range is not None:
        lo, hi = config.output_range
        x = np.clip(x, lo, hi)
    return x, summary
