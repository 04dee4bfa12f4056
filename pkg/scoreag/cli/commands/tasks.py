"""
Guided-sampling task commands: synth (GAS), transform (GAT) and purify (GAP).
"""

import logging
from argparse import Namespace

import numpy as np

from scoreag.cli import deps
from scoreag.cli.output import save_task_run
from scoreag.core.exception_handlers import EXIT_OK
from scoreag.services import task_service
from scoreag.services.data_service import balanced_subset, load_dataset

# Set up logger
logger = logging.getLogger(__name__)


def synth(args: Namespace) -> int:
    """Synthesise unrestricted adversarial examples from noise."""
    config = deps.get_config(args)
    model = deps.get_score_model(config)
    classifier = deps.get_classifier(config)

    results = task_service.run_gas(model, classifier, config.task, config.sampler, config.seed)
    rate = float(np.mean([r.success for r in results]))
    logger.info(f"GAS: {len(results)} samples, success rate {rate:.3f}")
    save_task_run(args, config, "synth", "gas", results, classifier.num_classes)
    return EXIT_OK


def transform(args: Namespace) -> int:
    """Transform correctly classified evaluation images into adversarial ones."""
    config = deps.get_config(args)
    model = deps.get_score_model(config)
    classifier = deps.get_classifier(config)
    _, evaluation = deps.get_splits(config)
    subset = balanced_subset(evaluation, config.task.n_samples)

    results = task_service.run_gat(
        model, classifier, subset.images, subset.labels, config.task, config.sampler, config.seed
    )
    attacked = [r for r in results if not r.rejected]
    rate = float(np.mean([r.success for r in attacked])) if attacked else 0.0
    logger.info(f"GAT: {len(attacked)} attacked, {len(results) - len(attacked)} rejected, success rate {rate:.3f}")
    save_task_run(args, config, "transform", "gat", results, classifier.num_classes)
    return EXIT_OK


def purify(args: Namespace) -> int:
    """Purify saved (adversarial) inputs, or evaluation images when no input is given."""
    config = deps.get_config(args)
    model = deps.get_score_model(config)
    classifier = deps.get_classifier(config)
    if args.input:
        inputs = load_dataset(args.input)
    else:
        _, evaluation = deps.get_splits(config)
        inputs = balanced_subset(evaluation, config.task.n_samples)

    results = task_service.run_gap(
        model, inputs.images, config.task.s_x, config.sampler, config.seed, inputs.labels, classifier
    )
    acc = float(np.mean([r.y_pred_after == r.y_true for r in results]))
    logger.info(f"GAP: {len(results)} inputs purified, accuracy after purification {acc:.3f}")
    save_task_run(args, config, "purify", "gap", results, classifier.num_classes)
    return EXIT_OK


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("synth", parents=parents, help="Generative adversarial synthesis (GAS)")
    parser.add_argument("--pgm", action="store_true", help="Also export outputs as PGM images")
    parser.set_defaults(handler=synth)

    parser = subparsers.add_parser("transform", parents=parents, help="Generative adversarial transformation (GAT)")
    parser.add_argument("--pgm", action="store_true", help="Also export outputs as PGM images")
    parser.set_defaults(handler=transform)

    parser = subparsers.add_parser("purify", parents=parents, help="Generative adversarial purification (GAP)")
    parser.add_argument("--pgm", action="store_true", help="Also export outputs as PGM images")
    parser.add_argument("--input", default=None, help="Dataset .npz of inputs to purify, e.g. baseline-attack output")
    parser.set_defaults(handler=purify)
