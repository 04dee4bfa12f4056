"""
Norm-bounded baseline attack command.
"""

import logging
import os
from argparse import Namespace

from scoreag.cli import deps
from scoreag.cli.output import echo
from scoreag.core.exception_handlers import EXIT_OK
from scoreag.io.results import write_manifest, write_task_results
from scoreag.services.baseline_service import run_baseline
from scoreag.services.data_service import Dataset, balanced_subset, save_dataset

# Set up logger
logger = logging.getLogger(__name__)


def baseline_attack(args: Namespace) -> int:
    """Run FGSM or PGD on evaluation images and save the adversarial set."""
    config = deps.get_config(args)
    classifier = deps.get_classifier(config)
    _, evaluation = deps.get_splits(config)
    subset = balanced_subset(evaluation, config.baseline.n_samples)

    adv, results = run_baseline(classifier, subset.images, subset.labels, config.baseline, config.seed)
    os.makedirs(config.out_dir, exist_ok=True)
    prefix = config.baseline.attack.replace("-", "_")
    csv_path = write_task_results(os.path.join(config.out_dir, f"{prefix}_results.csv"), results)
    adv_path = os.path.join(config.out_dir, f"{prefix}_adversarial.npz")
    save_dataset(Dataset(adv, subset.labels, subset.num_classes, split="eval", provenance="generated"), adv_path)
    write_manifest(config.out_dir, "baseline-attack", config, config.seed, [csv_path, adv_path])

    echo(args, results)
    return EXIT_OK


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("baseline-attack", parents=parents, help="FGSM / PGD baseline attacks")
    parser.add_argument(
        "--attack", dest="baseline_attack", choices=["fgsm", "pgd-l2", "pgd-linf"], help="Override baseline.attack"
    )
    parser.add_argument("--epsilon", type=float, default=None, help="Override baseline.epsilon")
    parser.set_defaults(handler=baseline_attack)
