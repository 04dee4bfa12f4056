"""
Result echo and run-directory bookkeeping shared by the commands.
"""

import logging
import os
import sys
from argparse import Namespace
from typing import Iterable, List, Sequence

import numpy as np
from pydantic import BaseModel

from scoreag.io.results import json_lines, to_json, write_manifest, write_pgm_batch, write_task_results, write_trajectory
from scoreag.schemas.config import RunConfig
from scoreag.schemas.results import TaskResult
from scoreag.services.data_service import Dataset, save_dataset

# Set up logger
logger = logging.getLogger(__name__)


def echo(args: Namespace, records: Iterable[BaseModel]) -> None:
    """Print one JSON object per record on stdout when ``--json`` is set."""
    if getattr(args, "json", False):
        for line in json_lines(records):
            sys.stdout.write(line + "\n")
        sys.stdout.flush()


def echo_document(args: Namespace, payload) -> None:
    if getattr(args, "json", False):
        sys.stdout.write(to_json(payload) + "\n")
        sys.stdout.flush()


def save_task_run(
    args: Namespace,
    config: RunConfig,
    command: str,
    prefix: str,
    results: Sequence[TaskResult],
    num_classes: int,
) -> List[str]:
    """
    Persist a task run: results CSV, output images, first trajectory, optional PGMs and the manifest.

    Returns:
        Paths written
    """
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    artifacts = [write_task_results(os.path.join(out, f"{prefix}_results.csv"), results)]

    images = np.stack([np.asarray(r.output) for r in results])
    labels = np.array([r.y_true if r.y_true is not None else 1 for r in results])
    outputs_path = os.path.join(out, f"{prefix}_outputs.npz")
    save_dataset(Dataset(images, labels, num_classes, split="eval", provenance="generated"), outputs_path)
    artifacts.append(outputs_path)

    if results and results[0].trajectory:
        artifacts.append(write_trajectory(os.path.join(out, f"{prefix}_trajectory.csv"), results[0].trajectory))
    if getattr(args, "pgm", False):
        write_pgm_batch(os.path.join(out, f"{prefix}_pgm"), prefix, images)

    artifacts.append(write_manifest(out, command, config, config.seed, artifacts))
    echo(args, results)
    return artifacts
