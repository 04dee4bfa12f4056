"""
Task service for ScoreAG

This module composes the guided sampler into the three tasks:

- GAS synthesises class-y* samples that the classifier assigns elsewhere,
  with rejection sampling over fresh noise;
- GAT transforms a correctly classified reference x* into an adversarial
  example that stays close to it;
- GAP purifies a (possibly adversarial) input with the unconditional score
  and a reconstruction pull towards the input.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence

import numpy as np

from scoreag.core.exception_handlers import InvalidSpecError
from scoreag.diffusion.sampler import ClassifierTarget, GuidanceSpec, Reconstruction, solve
from scoreag.models.classifier import Classifier, classify
from scoreag.models.score_model import ScoreFunction
from scoreag.schemas.config import SamplerConfig, TaskConfig
from scoreag.schemas.results import TaskResult
from scoreag.utils.parallel import ordered_map
from scoreag.utils.validation import validate_class, validate_input_shape, validate_shared_shape, validate_unit_range

# Set up logger
logger = logging.getLogger(__name__)


@dataclass
class AttackSpec:
    """Settings for one GAS or GAT run; ``target_class=None`` means untargeted."""

    mode: Literal["gas", "gat"]
    true_class: int
    s_y: float
    target_class: Optional[int] = None
    s_x: float = 0.0
    reference: Optional[np.ndarray] = None
    max_restarts: int = 4
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    index: int = 0
    seed: int = 0


@dataclass
class PurifySpec:
    x_adv: np.ndarray
    s_x: float = 10.0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    y_true: Optional[int] = None
    class_condition: Optional[int] = None
    index: int = 0
    seed: int = 0


def distances(a: np.ndarray, b: np.ndarray):
    diff = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).reshape(-1)
    return float(np.linalg.norm(diff)), float(np.max(np.abs(diff))) if diff.size else 0.0


def reconstruction_term(reference: np.ndarray, s_x: float) -> Reconstruction:
    """The reconstruction guidance shared by GAT and GAP."""
    return Reconstruction(reference=np.asarray(reference, dtype=np.float64), scale=s_x)


def attack_guidance(classifier: Classifier, spec: AttackSpec) -> GuidanceSpec:
    terms = []
    if spec.mode == "gat":
        terms.append(reconstruction_term(spec.reference, spec.s_x))
    terms.append(
        ClassifierTarget(classifier=classifier, scale=spec.s_y, target_class=spec.target_class, true_class=spec.true_class)
    )
    return GuidanceSpec(terms=terms, class_condition=spec.true_class)


def _check_attack(model: ScoreFunction, classifier: Classifier, spec: AttackSpec) -> None:
    validate_shared_shape(model, classifier, spec.mode)
    validate_class(spec.true_class, classifier.num_classes, "true_class")
    if spec.target_class is not None:
        validate_class(spec.target_class, classifier.num_classes, "target_class")
        if spec.target_class == spec.true_class:
            raise InvalidSpecError("Target class must differ from the true class", "target_class")


def _is_adversarial(label: int, spec: AttackSpec) -> bool:
    if spec.target_class is not None:
        return label == spec.target_class
    return label != spec.true_class


def gas(model: ScoreFunction, classifier: Classifier, spec: AttackSpec, rng: np.random.Generator) -> TaskResult:
    """
    Generative adversarial synthesis.

    Samples from the class-y* conditional score with classifier-target
    guidance and retries with fresh noise until the sample is adversarial or
    ``max_restarts`` retries are used.

    Args:
        model: Class-conditional score function
        classifier: Classifier under attack
        spec: Attack settings (mode ``gas``)
        rng: Noise stream; retries continue the same stream

    Returns:
        TaskResult carrying the synthesised image in ``output``
    """
    _check_attack(model, classifier, spec)
    guidance = attack_guidance(classifier, spec)
    shape = (1,) + tuple(model.input_shape)

    attempt = 0
    while True:
        x, summary = solve(model, guidance, spec.sampler, shape, rng)
        label = classify(classifier, x[0]).label
        success = _is_adversarial(label, spec)
        if success or attempt >= spec.max_restarts:
            break
        attempt += 1
        logger.debug(f"GAS sample {spec.index}: attempt {attempt} classified as {label}, retrying")

    logger.info(f"GAS sample {spec.index}: y*={spec.true_class} -> {label}, success={success}, restarts={attempt}")
    return TaskResult(
        index=spec.index,
        mode="gas",
        y_true=spec.true_class,
        y_target=spec.target_class,
        y_pred_after=label,
        success=success,
        restarts=attempt,
        seed=spec.seed,
        output=x[0],
        trajectory=summary.rows,
    )


def gat(model: ScoreFunction, classifier: Classifier, spec: AttackSpec, rng: np.random.Generator) -> TaskResult:
    """
    Generative adversarial transformation of the reference ``spec.reference``.

    A reference the classifier already gets wrong is rejected: the result is
    flagged ``rejected`` and returned without sampling.

    Returns:
        TaskResult with l2/linf distances to the reference
    """
    _check_attack(model, classifier, spec)
    if spec.reference is None:
        raise InvalidSpecError("GAT needs a reference image", "reference")
    reference = validate_unit_range(spec.reference, "reference", "gat")
    validate_input_shape(reference, classifier.input_shape, "gat")

    before = classify(classifier, reference).label
    if before != spec.true_class:
        logger.warning(f"GAT sample {spec.index}: reference classified as {before}, not {spec.true_class}; rejected")
        return TaskResult(
            index=spec.index,
            mode="gat",
            y_true=spec.true_class,
            y_target=spec.target_class,
            y_pred_before=before,
            y_pred_after=before,
            success=False,
            l2=0.0,
            linf=0.0,
            seed=spec.seed,
            rejected=True,
            output=reference,
        )

    x, summary = solve(model, attack_guidance(classifier, spec), spec.sampler, (1,) + reference.shape, rng)
    label = classify(classifier, x[0]).label
    l2, linf = distances(x[0], reference)
    success = _is_adversarial(label, spec)
    logger.info(f"GAT sample {spec.index}: {before} -> {label}, success={success}, l2={l2:.4f}")
    return TaskResult(
        index=spec.index,
        mode="gat",
        y_true=spec.true_class,
        y_target=spec.target_class,
        y_pred_before=before,
        y_pred_after=label,
        success=success,
        l2=l2,
        linf=linf,
        seed=spec.seed,
        output=x[0],
        trajectory=summary.rows,
    )


def gap(
    model: ScoreFunction,
    spec: PurifySpec,
    rng: np.random.Generator,
    classifier: Optional[Classifier] = None,
) -> TaskResult:
    """
    Generative adversarial purification of ``spec.x_adv``.

    Uses the unconditional score (``spec.class_condition`` overrides this for
    tests) plus reconstruction guidance towards the input. There is no success
    predicate; labels are reported when a classifier is given.
    """
    x_adv = validate_unit_range(spec.x_adv, "x_adv", "gap")
    validate_input_shape(x_adv, model.input_shape, "gap")
    if spec.s_x < 0:
        raise InvalidSpecError(f"s_x must be non-negative, got {spec.s_x}", "s_x")

    guidance = GuidanceSpec(terms=[reconstruction_term(x_adv, spec.s_x)], class_condition=spec.class_condition)
    x, summary = solve(model, guidance, spec.sampler, (1,) + x_adv.shape, rng)
    l2, linf = distances(x[0], x_adv)

    before = after = None
    if classifier is not None:
        before = classify(classifier, x_adv).label
        after = classify(classifier, x[0]).label
    logger.info(f"GAP sample {spec.index}: {before} -> {after}, l2={l2:.4f}")
    return TaskResult(
        index=spec.index,
        mode="gap",
        y_true=spec.y_true,
        y_pred_before=before,
        y_pred_after=after,
        l2=l2,
        linf=linf,
        seed=spec.seed,
        output=x[0],
        trajectory=summary.rows,
    )


# Dataset-wide runs

def sample_rng(seed: int, stream: int, index: int, restart: int = 0) -> np.random.Generator:
    """Independent per-sample generator."""
    return np.random.default_rng([seed, stream, index, restart])


STREAM_GAS, STREAM_GAT, STREAM_GAP, STREAM_PGD = 1, 2, 3, 4


def gas_classes(num_classes: int, n: int, true_class: Optional[int], target_class: Optional[int]) -> List[int]:
    """True class per GAS sample: fixed, or cycling over classes other than the target."""
    if true_class is not None:
        return [true_class] * n
    pool = [k for k in range(1, num_classes + 1) if k != target_class]
    return [pool[i % len(pool)] for i in range(n)]


def run_gas(
    model: ScoreFunction,
    classifier: Classifier,
    task: TaskConfig,
    sampler: SamplerConfig,
    seed: int,
    workers: Optional[int] = None,
) -> List[TaskResult]:
    classes = gas_classes(classifier.num_classes, task.n_samples, task.true_class, task.target_class)

    def run(i: int) -> TaskResult:
        spec = AttackSpec(
            mode="gas",
            true_class=classes[i],
            target_class=task.target_class,
            s_y=task.s_y,
            max_restarts=task.max_restarts,
            sampler=sampler,
            index=i,
            seed=seed,
        )
        return gas(model, classifier, spec, sample_rng(seed, STREAM_GAS, i))

    return ordered_map(run, list(range(task.n_samples)), workers, desc="gas")


def run_gat(
    model: ScoreFunction,
    classifier: Classifier,
    images: np.ndarray,
    labels: Sequence[int],
    task: TaskConfig,
    sampler: SamplerConfig,
    seed: int,
    workers: Optional[int] = None,
) -> List[TaskResult]:
    def run(i: int) -> TaskResult:
        target = task.target_class
        if target is not None and target == int(labels[i]):
            logger.warning(f"GAT sample {i}: target equals true class {target}; running untargeted")
            target = None
        spec = AttackSpec(
            mode="gat",
            true_class=int(labels[i]),
            target_class=target,
            s_y=task.s_y,
            s_x=task.s_x,
            reference=images[i],
            sampler=sampler,
            index=i,
            seed=seed,
        )
        return gat(model, classifier, spec, sample_rng(seed, STREAM_GAT, i))

    return ordered_map(run, list(range(len(images))), workers, desc="gat")


def run_gap(
    model: ScoreFunction,
    images: np.ndarray,
    s_x: float,
    sampler: SamplerConfig,
    seed: int,
    labels: Optional[Sequence[int]] = None,
    classifier: Optional[Classifier] = None,
    workers: Optional[int] = None,
) -> List[TaskResult]:
    def run(i: int) -> TaskResult:
        spec = PurifySpec(
            x_adv=images[i],
            s_x=s_x,
            sampler=sampler,
            y_true=None if labels is None else int(labels[i]),
            index=i,
            seed=seed,
        )
        return gap(model, spec, sample_rng(seed, STREAM_GAP, i), classifier)

    return ordered_map(run, list(range(len(images))), workers, desc="gap")


def outputs(results: Sequence[TaskResult]) -> np.ndarray:
    return np.stack([np.asarray(r.output) for r in results])
