"""
Baseline service for ScoreAG

Norm-bounded gradient attacks on the classifier: FGSM and PGD under L2 or
L-infinity budgets. PGD tracks the perturbation ``delta`` and evaluates the
classifier at ``clip(x + delta, 0, 1)``, so FGSM is exactly one PGD step of
size epsilon from a zero start.
"""

import logging
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from scoreag.core.exception_handlers import ContractError, EmptyInputError, InvalidSpecError
from scoreag.diffcore import ops
from scoreag.diffcore.tensor import Tensor, gradients
from scoreag.models.classifier import Classifier, predict_labels
from scoreag.schemas.config import BaselineConfig
from scoreag.schemas.results import TaskResult
from scoreag.utils.validation import validate_class, validate_unit_range

# Set up logger
logger = logging.getLogger(__name__)


# Perturbation budget
class NormBudget(BaseModel):
    norm: Literal["l2", "linf"] = "linf"
    epsilon: float = Field(gt=0)
    step_size: float = Field(gt=0)
    n_iter: int = Field(default=40, ge=1)


def _rows(v: np.ndarray) -> np.ndarray:
    return v.reshape(v.shape[0], -1)


def _expand(values: np.ndarray, like: np.ndarray) -> np.ndarray:
    return values.reshape((like.shape[0],) + (1,) * (like.ndim - 1))


def _prepare(classifier: Classifier, x: np.ndarray, labels, operation: str) -> Tuple[np.ndarray, np.ndarray, bool]:
    x = validate_unit_range(x, "x", operation)
    single = x.shape == tuple(classifier.input_shape)
    batch = x[None] if single else x
    if batch.shape[0] == 0:
        raise EmptyInputError(operation)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (batch.shape[0],):
        raise ContractError(f"Expected {batch.shape[0]} labels, got shape {labels.shape}", operation)
    for label in labels:
        validate_class(int(label), classifier.num_classes, "y_true")
    return batch, labels, single


def loss_gradient(
    classifier: Classifier,
    x_batch: np.ndarray,
    labels: np.ndarray,
    target_class: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-sample attack objective and its input gradient.

    The objective is the cross-entropy against ``labels`` (untargeted) or the
    log-probability of ``target_class`` (targeted); the attack ascends it.

    Returns:
        Tuple of objective values ``(n,)`` and gradients shaped like ``x_batch``
    """
    x = Tensor._wrap(np.array(x_batch, dtype=np.float64), requires_grad=True)
    log_probs = ops.log_softmax(classifier.logits(x))
    if target_class is None:
        picked = ops.take(log_probs, labels - 1)
        objective = ops.sub(0.0, ops.sum(picked))
        values = -picked.numpy()
    else:
        picked = ops.take(log_probs, np.full(labels.shape, target_class - 1))
        objective = ops.sum(picked)
        values = picked.numpy()
    (grad,) = gradients(objective, [x])
    return values, grad


def project(delta: np.ndarray, budget: NormBudget) -> np.ndarray:
    """Project each row of ``delta`` onto the epsilon ball."""
    if budget.norm == "linf":
        return np.clip(delta, -budget.epsilon, budget.epsilon)
    norms = np.linalg.norm(_rows(delta), axis=1)
    factors = np.where(norms > budget.epsilon, budget.epsilon / np.maximum(norms, 1e-300), 1.0)
    return delta * _expand(factors, delta)


def ascent_direction(grad: np.ndarray, norm: str) -> np.ndarray:
    """Sign of the gradient for L-inf, unit-norm gradient for L2 (zero stays zero)."""
    if norm == "linf":
        return np.sign(grad)
    norms = np.linalg.norm(_rows(grad), axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return grad / _expand(safe, grad)


def random_start(shape: Tuple[int, ...], budget: NormBudget, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the epsilon ball for every row."""
    if budget.norm == "linf":
        return rng.uniform(-budget.epsilon, budget.epsilon, size=shape)
    n, d = shape[0], int(np.prod(shape[1:]))
    direction = rng.standard_normal((n, d))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    radius = budget.epsilon * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d)
    return (direction * radius).reshape(shape)


def fgsm(classifier: Classifier, x: np.ndarray, y_true, epsilon: float) -> np.ndarray:
    """
    Fast gradient sign method: ``clip(x + epsilon * sign(grad CE), 0, 1)``.

    Args:
        classifier: Classifier under attack
        x: One image or a batch in [0, 1]
        y_true: Label or labels in 1..K
        epsilon: L-inf budget

    Returns:
        Adversarial input(s) shaped like ``x``
    """
    if epsilon <= 0:
        raise InvalidSpecError(f"epsilon must be positive, got {epsilon}", "epsilon")
    batch, labels, single = _prepare(classifier, x, y_true, "fgsm")
    _, grad = loss_gradient(classifier, batch, labels)
    delta = epsilon * np.sign(grad)
    adv = np.clip(batch + delta, 0.0, 1.0)
    return adv[0] if single else adv


def pgd(
    classifier: Classifier,
    x: np.ndarray,
    y_true,
    budget: NormBudget,
    rng: Optional[np.random.Generator] = None,
    random_init: bool = True,
    restarts: int = 1,
    target_class: Optional[int] = None,
) -> np.ndarray:
    """
    Projected gradient ascent on the attack objective.

    Each restart starts from a random point of the ball (or zero) and runs
    ``n_iter`` steps; per sample the first successful restart wins, otherwise
    the one with the highest final objective.

    Args:
        classifier: Classifier under attack
        x: One image or a batch in [0, 1]
        y_true: Label or labels in 1..K
        budget: Norm, radius, step size and iteration count
        rng: Generator for random starts
        random_init: Start from a random point of the ball
        restarts: Number of independent runs
        target_class: Targeted mode when set

    Returns:
        Adversarial input(s) shaped like ``x``, within the budget and in [0, 1]

    Raises:
        InvalidSpecError: If the target equals a sample's true class
    """
    batch, labels, single = _prepare(classifier, x, y_true, "pgd")
    if target_class is not None:
        validate_class(target_class, classifier.num_classes, "target_class")
        if np.any(labels == target_class):
            raise InvalidSpecError("Target class must differ from the true class", "target_class")
    if restarts < 1:
        raise InvalidSpecError(f"restarts must be at least 1, got {restarts}", "restarts")
    rng = rng or np.random.default_rng(0)

    best = np.array(batch)
    best_value = np.full(batch.shape[0], -np.inf)
    best_success = np.zeros(batch.shape[0], dtype=bool)
    for r in range(restarts):
        delta = random_start(batch.shape, budget, rng) if random_init else np.zeros_like(batch)
        for _ in range(budget.n_iter):
            _, grad = loss_gradient(classifier, np.clip(batch + delta, 0.0, 1.0), labels, target_class)
            delta = project(delta + budget.step_size * ascent_direction(grad, budget.norm), budget)
        adv = np.clip(batch + delta, 0.0, 1.0)

        values, _ = loss_gradient(classifier, adv, labels, target_class)
        predicted = predict_labels(classifier, adv)
        success = predicted == target_class if target_class is not None else predicted != labels
        better = ~best_success & (success | (values > best_value))
        best[better] = adv[better]
        best_value[better] = values[better]
        best_success |= success
        logger.debug(f"PGD restart {r + 1}/{restarts}: {int(success.sum())}/{batch.shape[0]} adversarial")

    return best[0] if single else best


def budget_from_config(config: BaselineConfig) -> NormBudget:
    norm = "l2" if config.attack == "pgd-l2" else "linf"
    if config.attack == "fgsm":
        return NormBudget(norm="linf", epsilon=config.epsilon, step_size=config.epsilon, n_iter=1)
    step = config.step_size or 2.5 * config.epsilon / config.n_iter
    return NormBudget(norm=norm, epsilon=config.epsilon, step_size=step, n_iter=config.n_iter)


def run_baseline(
    classifier: Classifier,
    images: np.ndarray,
    labels: np.ndarray,
    config: BaselineConfig,
    seed: int,
) -> Tuple[np.ndarray, List[TaskResult]]:
    """
    Attack a batch with the configured baseline and score every sample.

    Returns:
        Adversarial images and one TaskResult per input, in input order
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if config.attack == "fgsm":
        adv = fgsm(classifier, images, labels, config.epsilon)
    else:
        adv = pgd(
            classifier,
            images,
            labels,
            budget_from_config(config),
            rng=np.random.default_rng([seed, 4]),
            random_init=config.random_start,
            restarts=config.restarts,
            target_class=config.target_class,
        )

    before = predict_labels(classifier, images)
    after = predict_labels(classifier, adv)
    diff = _rows(adv - images)
    results = []
    for i in range(images.shape[0]):
        if config.target_class is not None:
            success = bool(after[i] == config.target_class)
        else:
            success = bool(after[i] != labels[i])
        results.append(
            TaskResult(
                index=i,
                mode=config.attack,
                y_true=int(labels[i]),
                y_target=config.target_class,
                y_pred_before=int(before[i]),
                y_pred_after=int(after[i]),
                success=success,
                l2=float(np.linalg.norm(diff[i])),
                linf=float(np.max(np.abs(diff[i]))),
                seed=seed,
                output=adv[i],
            )
        )
    rate = np.mean([r.success for r in results])
    logger.info(f"{config.attack} eps={config.epsilon:.4f}: success rate {rate:.3f} over {len(results)} samples")
    return adv, results
