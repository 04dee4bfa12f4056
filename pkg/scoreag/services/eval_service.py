"""
Evaluation service for ScoreAG

This module computes the benchmark metrics (clean, adversarial and robust
accuracy, median Lp distances, Frechet distance over classifier features)
and runs a full attack/defense benchmark or a sweep over one scale.

Robust accuracy is measured in the preprocessor-blackbox setting: attacks
see the raw classifier and the purification is applied afterwards.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from scoreag.core.exception_handlers import (
    ConfigurationError,
    EmptyInputError,
    MetricComputationError,
    ShapeMismatchError,
)
from scoreag.models.classifier import Classifier, extract_features, predict_labels
from scoreag.models.score_model import ScoreFunction
from scoreag.schemas.config import RunConfig
from scoreag.schemas.results import MetricReport, TaskResult
from scoreag.services import baseline_service, task_service
from scoreag.services.data_service import Dataset, balanced_subset
from scoreag.utils.error_handling import ensure_finite, ensure_non_empty, ensure_same_shape
from scoreag.utils.fingerprint import effective_config

# Set up logger
logger = logging.getLogger(__name__)

FRECHET_REGULARIZATION = 1e-6
FRECHET_FLOOR = -1e-8


def accuracy(classifier: Classifier, images: np.ndarray, labels: Sequence[int]) -> float:
    """
    Fraction of ``images`` the classifier assigns to ``labels``.

    Raises:
        EmptyInputError: If no images are given
        ShapeMismatchError: If images and labels differ in length
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if images.shape[0] == 0:
        raise EmptyInputError("accuracy")
    if labels.shape != (images.shape[0],):
        raise ShapeMismatchError("accuracy", [images.shape, labels.shape])
    return float(np.mean(predict_labels(classifier, images) == labels))


def lp_distances(originals: np.ndarray, perturbed: np.ndarray, p: float = 2) -> np.ndarray:
    a = np.asarray(originals, dtype=np.float64)
    b = np.asarray(perturbed, dtype=np.float64)
    ensure_same_shape(a, b, "median_lp")
    ensure_non_empty(a, "median_lp")
    diff = (b - a).reshape(a.shape[0], -1)
    if p == np.inf:
        return np.max(np.abs(diff), axis=1)
    return np.linalg.norm(diff, axis=1)


def median_lp(originals: np.ndarray, perturbed: np.ndarray, p: float = 2) -> float:
    """
    Median over samples of ``||x' - x||_p`` with flattened inputs.

    Args:
        originals: Reference batch ``(n, ...)``
        perturbed: Batch of the same shape
        p: 2 or ``np.inf``

    Returns:
        The median; the mean of the two central values for even counts
    """
    if p not in (2, np.inf):
        raise MetricComputationError(f"Unsupported norm p={p}", "median_lp")
    return float(np.median(lp_distances(originals, perturbed, p)))


def _covariance(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mu = features.mean(axis=0)
    centred = features - mu
    cov = centred.T @ centred / (features.shape[0] - 1)
    return mu, cov + FRECHET_REGULARIZATION * np.eye(features.shape[1])


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def _as_feature_rows(features) -> np.ndarray:
    # A flat array is n samples of one feature
    arr = np.asarray(features, dtype=np.float64)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def frechet_feature_distance(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """
    Frechet distance between Gaussians fitted to two feature sets.

    Computes ``||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`` with
    unbiased covariances plus ``1e-6 * I``. The trace of the product's square
    root is taken from the eigenvalues of ``S_a^(1/2) S_b S_a^(1/2)``.

    Args:
        features_a: ``(n_a, d)`` features
        features_b: ``(n_b, d)`` features

    Returns:
        Non-negative distance

    Raises:
        MetricComputationError: With fewer than ``d + 1`` samples in a set or
            when the eigensolver fails
    """
    a = _as_feature_rows(features_a)
    b = _as_feature_rows(features_b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise MetricComputationError(f"Feature sets disagree: {a.shape} vs {b.shape}", "frechet")
    ensure_finite(a, "frechet")
    ensure_finite(b, "frechet")
    d = a.shape[1]
    if min(a.shape[0], b.shape[0]) < d + 1:
        raise MetricComputationError(
            f"Need at least {d + 1} samples per set, got {a.shape[0]} and {b.shape[0]}", "frechet"
        )

    mu_a, cov_a = _covariance(a)
    mu_b, cov_b = _covariance(b)
    try:
        root_a = _sqrt_psd(cov_a)
        middle = root_a @ cov_b @ root_a
        eigenvalues = np.linalg.eigvalsh(0.5 * (middle + middle.T))
    except np.linalg.LinAlgError as e:
        raise MetricComputationError(f"Eigendecomposition failed: {str(e)}", "frechet")

    trace_root = float(np.sum(np.sqrt(np.clip(eigenvalues, 0.0, None))))
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_root)
    if value < 0.0:
        if value < FRECHET_FLOOR:
            logger.warning(f"Frechet distance {value:.3e} below numerical floor; clamped to 0")
        value = 0.0
    return value


def _frechet_or_none(classifier: Classifier, real: np.ndarray, generated: np.ndarray) -> Optional[float]:
    try:
        return frechet_feature_distance(extract_features(classifier, real), extract_features(classifier, generated))
    except MetricComputationError as e:
        logger.warning(f"Skipping Frechet distance: {e.message}")
        return None


# Benchmark

def _attack(
    config: RunConfig,
    score_model: Optional[ScoreFunction],
    classifier: Classifier,
    subset: Dataset,
    workers: Optional[int],
) -> Tuple[np.ndarray, np.ndarray, List[TaskResult]]:
    """Adversarial images, their reference labels and per-sample results."""
    attack = config.eval.attack
    if attack == "none":
        return subset.images, subset.labels, []
    if attack in ("fgsm", "pgd-l2", "pgd-linf"):
        baseline = config.baseline.model_copy(update={"attack": attack})
        adv, results = baseline_service.run_baseline(classifier, subset.images, subset.labels, baseline, config.seed)
        return adv, subset.labels, results
    if score_model is None:
        raise ConfigurationError(f"Attack {attack} needs a score model checkpoint")
    if attack == "gat":
        results = task_service.run_gat(
            score_model, classifier, subset.images, subset.labels, config.task, config.sampler, config.seed, workers
        )
        return task_service.outputs(results), subset.labels, results

    task = config.task.model_copy(update={"n_samples": len(subset)})
    results = task_service.run_gas(score_model, classifier, task, config.sampler, config.seed, workers)
    return task_service.outputs(results), np.array([r.y_true for r in results]), results


def run_benchmark(
    config: RunConfig,
    classifier: Classifier,
    eval_set: Dataset,
    score_model: Optional[ScoreFunction] = None,
    workers: Optional[int] = None,
) -> Tuple[MetricReport, List[TaskResult]]:
    """
    Evaluate the configured attack and optional GAP defense.

    Args:
        config: Run configuration; ``eval`` selects attack, defense and size
        classifier: Classifier under attack
        eval_set: Evaluation split
        score_model: Required for GAS/GAT attacks and the GAP defense
        workers: Fan-out width for per-sample sampling

    Returns:
        The metric report and the per-sample attack results

    Raises:
        ConfigurationError: If a generative attack or defense lacks a score model
    """
    if config.eval.defense == "gap" and score_model is None:
        raise ConfigurationError("GAP defense needs a score model checkpoint")
    subset = balanced_subset(eval_set, config.eval.n_samples)
    logger.info(f"Benchmark: attack={config.eval.attack}, defense={config.eval.defense}, n={len(subset)}")

    clean_acc = accuracy(classifier, subset.images, subset.labels)
    adv, adv_labels, results = _attack(config, score_model, classifier, subset, workers)

    kept = np.array([not r.rejected for r in results], dtype=bool) if results else np.ones(len(adv), dtype=bool)
    n_rejected = int(np.sum(~kept))
    if not np.any(kept):
        raise MetricComputationError("Every input was rejected before the attack", "run_benchmark")
    adv_acc = accuracy(classifier, adv[kept], adv_labels[kept])

    robust_acc = adv_acc
    purified_clean_acc = None
    if config.eval.defense == "gap":
        s_x = config.eval.defense_s_x
        purified = task_service.outputs(
            task_service.run_gap(score_model, adv[kept], s_x, config.sampler, config.seed, workers=workers)
        )
        robust_acc = accuracy(classifier, purified, adv_labels[kept])
        if config.eval.attack == "none":
            purified_clean_acc = robust_acc
        else:
            purified_clean = task_service.outputs(
                task_service.run_gap(score_model, subset.images, s_x, config.sampler, config.seed, workers=workers)
            )
            purified_clean_acc = accuracy(classifier, purified_clean, subset.labels)

    median_l2 = median_linf = None
    if config.eval.attack not in ("none", "gas"):
        median_l2 = median_lp(subset.images[kept], adv[kept], 2)
        median_linf = median_lp(subset.images[kept], adv[kept], np.inf)

    report = MetricReport(
        attack=config.eval.attack,
        defense=config.eval.defense,
        clean_acc=clean_acc,
        purified_clean_acc=purified_clean_acc,
        adv_acc=adv_acc,
        robust_acc=robust_acc,
        median_l2=median_l2,
        median_linf=median_linf,
        frechet=_frechet_or_none(classifier, subset.images, adv[kept]),
        n_samples=len(subset),
        n_rejected=n_rejected,
        config=effective_config(config),
    )
    logger.info(
        f"Benchmark done: clean={clean_acc:.3f}, adv={adv_acc:.3f}, robust={robust_acc:.3f}, rejected={n_rejected}"
    )
    return report, results


SWEEP_PARAMS = ("s_x", "s_y", "epsilon")


def apply_scale(config: RunConfig, param: str, value: float) -> RunConfig:
    """
    Copy of ``config`` with one scale replaced.

    ``s_x`` sets the GAP defense scale when the defense is active and the GAT
    scale otherwise; ``epsilon`` sets the baseline budget.
    """
    if param == "s_x":
        if config.eval.defense == "gap":
            section = config.eval.model_copy(update={"defense_s_x": value})
            return config.model_copy(update={"eval": section})
        return config.model_copy(update={"task": config.task.model_copy(update={"s_x": value})})
    if param == "s_y":
        return config.model_copy(update={"task": config.task.model_copy(update={"s_y": value})})
    if param == "epsilon":
        return config.model_copy(update={"baseline": config.baseline.model_copy(update={"epsilon": value})})
    raise ConfigurationError(f"Unknown sweep parameter {param}; expected one of {', '.join(SWEEP_PARAMS)}")


def sweep(
    config: RunConfig,
    param: str,
    values: Sequence[float],
    classifier: Classifier,
    eval_set: Dataset,
    score_model: Optional[ScoreFunction] = None,
    workers: Optional[int] = None,
) -> List[MetricReport]:
    """One benchmark per scale value, in the order given."""
    reports = []
    for value in values:
        report, _ = run_benchmark(apply_scale(config, param, float(value)), classifier, eval_set, score_model, workers)
        reports.append(report.model_copy(update={"scale_param": param, "scale": float(value)}))
    return reports
