"""
Dataset commands.
"""

import logging
import os
from argparse import Namespace

from scoreag.cli import deps
from scoreag.cli.output import echo_document
from scoreag.core.exception_handlers import EXIT_OK
from scoreag.io.results import write_manifest
from scoreag.services.data_service import save_dataset

# Set up logger
logger = logging.getLogger(__name__)


def gen_data(args: Namespace) -> int:
    """
    Generate the configured dataset and store train/eval splits as .npz.
    """
    config = deps.get_config(args)
    train, evaluation = deps.get_splits(config)
    os.makedirs(config.out_dir, exist_ok=True)

    artifacts = []
    for split in (train, evaluation):
        path = os.path.join(config.out_dir, f"dataset_{split.split}.npz")
        save_dataset(split, path)
        artifacts.append(path)
    write_manifest(config.out_dir, "gen-data", config, config.seed, artifacts)

    summary = {
        "source": config.data.source,
        "num_classes": train.num_classes,
        "input_shape": list(train.input_shape),
        "n_train": len(train),
        "n_eval": len(evaluation),
        "class_counts": {str(k): v for k, v in train.class_counts().items()},
    }
    logger.info(f"Generated {config.data.source} data: {len(train)} train / {len(evaluation)} eval")
    echo_document(args, summary)
    return EXIT_OK


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("gen-data", parents=parents, help="Generate and split the configured dataset")
    parser.set_defaults(handler=gen_data)
