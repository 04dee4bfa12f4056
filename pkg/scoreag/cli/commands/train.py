"""
Training commands for the score network and the classifier.
"""

import logging
import os
from argparse import Namespace

from scoreag.cli import deps
from scoreag.cli.output import echo_document
from scoreag.core.exception_handlers import EXIT_OK
from scoreag.io import checkpoint
from scoreag.io.results import write_csv, write_manifest
from scoreag.models.classifier import Classifier
from scoreag.models.score_model import ScoreModel
from scoreag.services.eval_service import accuracy
from scoreag.services.training_service import TrainingResult, train_classifier, train_score

# Set up logger
logger = logging.getLogger(__name__)


def _write_trace(path: str, result: TrainingResult) -> str:
    rows = []
    for epoch, loss in enumerate(result.loss_trace):
        row = {"epoch": epoch + 1, "loss": loss}
        if result.accuracy_trace:
            row["train_acc"] = result.accuracy_trace[epoch]
        rows.append(row)
    columns = ["epoch", "loss"] + (["train_acc"] if result.accuracy_trace else [])
    return write_csv(path, columns, rows)


def train_score_command(args: Namespace) -> int:
    config = deps.get_config(args)
    train, _ = deps.get_splits(config)
    model = ScoreModel(train.input_shape, train.num_classes, config.schedule, config.score_model, seed=config.seed)

    result = train_score(model, train, config.score_model.train)
    path = deps.checkpoint_path(config, ScoreModel.model_kind)
    checkpoint.save(model, path)
    trace = _write_trace(os.path.join(config.out_dir, "score_training.csv"), result)
    write_manifest(config.out_dir, "train-score", config, config.seed, [path, trace])

    echo_document(args, {"checkpoint": path, "steps": result.steps, "final_loss": result.loss_trace[-1]})
    return EXIT_OK


def train_classifier_command(args: Namespace) -> int:
    config = deps.get_config(args)
    train, evaluation = deps.get_splits(config)
    classifier = Classifier(train.input_shape, train.num_classes, config.classifier, seed=config.seed)

    result = train_classifier(classifier, train, config.classifier.train)
    eval_acc = accuracy(classifier, evaluation.images, evaluation.labels)
    logger.info(f"Classifier held-out accuracy: {eval_acc:.4f}")

    path = deps.checkpoint_path(config, Classifier.model_kind)
    checkpoint.save(classifier, path)
    trace = _write_trace(os.path.join(config.out_dir, "classifier_training.csv"), result)
    write_manifest(config.out_dir, "train-classifier", config, config.seed, [path, trace])

    echo_document(
        args,
        {"checkpoint": path, "steps": result.steps, "final_loss": result.loss_trace[-1], "eval_acc": eval_acc},
    )
    return EXIT_OK


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("train-score", parents=parents, help="Train the class-conditional score network")
    parser.set_defaults(handler=train_score_command)
    parser = subparsers.add_parser("train-classifier", parents=parents, help="Train the classifier under attack")
    parser.set_defaults(handler=train_classifier_command)
