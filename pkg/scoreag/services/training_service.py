"""
Training service for ScoreAG

This module contains the training loops for the score network (denoising
score matching) and the classifier (cross-entropy). Both share the same
minibatch loop: Nesterov SGD, a cyclic cosine learning rate and an EMA shadow
of the weights updated after every step.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from scoreag.core.config import settings
from scoreag.core.exception_handlers import (
    DatasetError,
    EmptyInputError,
    NumericOverflowError,
    ShapeMismatchError,
    TrainingDivergedError,
)
from scoreag.diffcore import ops
from scoreag.diffcore.optim import NesterovSGD, cyclic_cosine_lr, ema_update
from scoreag.diffcore.tensor import Tensor, gradients
from scoreag.diffusion.vpsde import alpha_sigma2
from scoreag.models.base import Module
from scoreag.models.classifier import Classifier, labels_from_logits
from scoreag.models.score_model import UNCONDITIONAL, ScoreModel
from scoreag.schemas.config import TrainConfig
from scoreag.services.data_service import Dataset

# Set up logger
logger = logging.getLogger(__name__)

# Floor for the estimated data scale (all-zero datasets)
MIN_SIGMA_DATA = 1e-2

# loss_fn(params, images, labels, rng) -> (scalar loss, number of correct predictions or None)
LossFn = Callable[[Dict[str, Tensor], np.ndarray, np.ndarray, np.random.Generator], Tuple[Tensor, Optional[int]]]


@dataclass
class TrainingResult:
    model: Module
    loss_trace: List[float] = field(default_factory=list)
    accuracy_trace: List[float] = field(default_factory=list)
    steps: int = 0


def dsm_loss(
    model,
    x0_batch: np.ndarray,
    y_batch,
    rng: np.random.Generator,
    params: Optional[Dict[str, Tensor]] = None,
    lambda_weighting: str = "sigma2",
) -> Tensor:
    """
    Denoising score matching loss for one batch.

    Samples ``t ~ U[t_eps, 1]`` and ``noise ~ N(0, I)`` per sample and returns
    the batch mean of ``lambda(t) * ||s(x_t, t, y) - kernel_score||^2``.

    Args:
        model: Score function; ``params`` are passed to ``score_with`` when given
        x0_batch: Clean samples ``(n, *input_shape)``
        y_batch: Labels in 1..K, 0 for unconditional, or None
        rng: Generator for times and noise
        params: Differentiable parameter tensors
        lambda_weighting: ``sigma2`` (lambda = sigma^2) or ``one``

    Returns:
        Scalar loss tensor

    Raises:
        EmptyInputError: If the batch is empty
    """
    x0 = np.asarray(x0_batch, dtype=np.float64)
    if x0.shape[0] == 0:
        raise EmptyInputError("dsm_loss")
    n = x0.shape[0]
    schedule = model.schedule
    t = rng.uniform(schedule.t_eps, 1.0, size=n)
    noise = rng.standard_normal(x0.shape)
    alpha, sigma2 = alpha_sigma2(schedule, t)
    expand = (n,) + (1,) * (x0.ndim - 1)
    xt = alpha.reshape(expand) * x0 + np.sqrt(sigma2).reshape(expand) * noise
    target = -(xt - alpha.reshape(expand) * x0) / sigma2.reshape(expand)

    xt_tensor = Tensor._wrap(xt)
    if params is None:
        score = model.score(xt_tensor, t, y_batch)
    else:
        score = model.score_with(params, xt_tensor, t, y_batch)
    per_sample = ops.squared_error(score, Tensor._wrap(target), "row")
    weights = sigma2 if lambda_weighting == "sigma2" else np.ones(n)
    return ops.mean(ops.mul(per_sample, Tensor._wrap(weights)))


def _fit(model: Module, dataset: Dataset, config: TrainConfig, loss_fn: LossFn) -> TrainingResult:
    if len(dataset) == 0:
        raise EmptyInputError(f"train_{model.model_kind}")
    rng = np.random.default_rng(config.seed)
    n = len(dataset)
    batches_per_epoch = math.ceil(n / config.batch_size)
    cycle_steps = (config.cycle_epochs or config.epochs) * batches_per_epoch
    optimizer = NesterovSGD(momentum=config.momentum, weight_decay=config.weight_decay)
    result = TrainingResult(model=model)
    names = model.names
    step = 0

    logger.info(
        f"Training {model.model_kind}: {model.num_parameters()} parameters, {n} samples, "
        f"{config.epochs} epochs of {batches_per_epoch} batches"
    )
    epochs = tqdm(range(config.epochs), desc=f"train {model.model_kind}", disable=not settings.show_progress)
    for epoch in epochs:
        order = rng.permutation(n)
        losses, correct = [], 0
        for b in range(batches_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            lr = cyclic_cosine_lr(step, cycle_steps, config.lr) if config.lr_schedule == "cyclic_cosine" else config.lr
            params = model.tensors("live", requires_grad=True)
            try:
                loss, n_correct = loss_fn(params, dataset.images[idx], dataset.labels[idx], rng)
                value = loss.item()
                grads = gradients(loss, [params[k] for k in names])
            except NumericOverflowError:
                raise TrainingDivergedError(step, lr, float("nan"), model.model_kind)
            if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergedError(step, lr, value, model.model_kind)

            model.set_params(optimizer.step(model.param_list("live"), grads, lr))
            model.set_params(ema_update(model.param_list("ema"), model.param_list("live"), config.ema_decay), "ema")
            losses.append(value)
            correct += n_correct or 0
            step += 1

        result.loss_trace.append(float(np.mean(losses)))
        if model.model_kind == Classifier.model_kind:
            result.accuracy_trace.append(correct / n)
        logger.info(
            f"{model.model_kind} epoch {epoch + 1}/{config.epochs}: mean loss {result.loss_trace[-1]:.5f}, lr {lr:.5f}"
        )

    result.steps = step
    return result


def _check_classes(model: Module, dataset: Dataset) -> None:
    if dataset.num_classes != model.num_classes:
        raise DatasetError(
            f"Dataset has {dataset.num_classes} classes but the {model.model_kind} expects {model.num_classes}"
        )
    if dataset.input_shape != model.input_shape:
        raise ShapeMismatchError(f"train_{model.model_kind}", [dataset.input_shape, model.input_shape])


def train_score(model: ScoreModel, dataset: Dataset, config: TrainConfig) -> TrainingResult:
    """
    Fit the score network by denoising score matching.

    A ``uncond_prob`` fraction of batches is trained with the unconditional
    class index so the same network also provides the unconditional score.
    A model without a configured ``sigma_data`` takes the root mean square of
    the training values.

    Args:
        model: Score network (updated in place)
        dataset: Training data
        config: Optimisation settings

    Returns:
        The model with live and EMA weights, and the per-epoch mean loss

    Raises:
        TrainingDivergedError: If the loss becomes non-finite
    """
    _check_classes(model, dataset)
    if model.config.sigma_data is None and len(dataset):
        model.set_sigma_data(max(float(np.sqrt(np.mean(dataset.images ** 2))), MIN_SIGMA_DATA))
        logger.info(f"Score model sigma_data set to {model.sigma_data:.4f} from the training set")

    def loss_fn(params, images, labels, rng):
        y = labels if rng.random() >= config.uncond_prob else np.full(labels.shape, UNCONDITIONAL)
        return dsm_loss(model, images, y, rng, params, config.lambda_weighting), None

    return _fit(model, dataset, config, loss_fn)


def train_classifier(classifier: Classifier, dataset: Dataset, config: TrainConfig) -> TrainingResult:
    """
    Fit the classifier with softmax cross-entropy.

    Returns:
        The classifier, per-epoch mean loss and running training accuracy
    """

    _check_classes(classifier, dataset)

    def loss_fn(params, images, labels, rng):
        logits, _ = classifier.forward_with(params, Tensor._wrap(np.array(images)))
        correct = int(np.sum(labels_from_logits(logits.data) == labels))
        return ops.softmax_cross_entropy(logits, labels - 1), correct

    return _fit(classifier, dataset, config, loss_fn)
