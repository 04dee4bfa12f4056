"""
Run artifacts: CSV tables, JSON reports, the run manifest and PGM exports.

Every writer produces deterministic bytes for the same records: columns in
a fixed order, floats in their shortest round-trip form, JSON with sorted
keys and no timestamps.
"""

import csv
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from scoreag import __version__
from scoreag.schemas.results import (
    METRIC_COLUMNS,
    TASK_RESULT_COLUMNS,
    TRAJECTORY_COLUMNS,
    MetricReport,
    RunManifest,
    TaskResult,
    TrajectoryRow,
)
from scoreag.utils.fingerprint import config_hash, effective_config

# Set up logger
logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _ensure_dir(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> str:
    """Write ``rows`` with a header line; missing values become empty cells."""
    _ensure_dir(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    return path


def write_task_results(path: str, results: Sequence[TaskResult]) -> str:
    return write_csv(path, TASK_RESULT_COLUMNS, (r.row() for r in results))


def write_trajectory(path: str, rows: Sequence[TrajectoryRow]) -> str:
    return write_csv(path, TRAJECTORY_COLUMNS, (r.model_dump() for r in rows))


def write_metrics(path: str, reports: Sequence[MetricReport]) -> str:
    return write_csv(path, METRIC_COLUMNS, (r.summary_row() for r in reports))


def to_json(payload: Any) -> str:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, indent=2)


def write_json(path: str, payload: Any) -> str:
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(payload))
        fh.write("\n")
    return path


def json_lines(records: Iterable[BaseModel]) -> List[str]:
    """One compact JSON object per record, for ``--json`` echoes."""
    return [json.dumps(r.model_dump(mode="json"), sort_keys=True, separators=(",", ":")) for r in records]


def write_manifest(
    out_dir: str,
    command: str,
    config: BaseModel,
    seed: int,
    artifacts: Optional[Sequence[str]] = None,
) -> str:
    """
    Record what produced the artifacts of a run directory.

    Args:
        out_dir: Run directory
        command: Subcommand name
        config: Effective run configuration
        seed: Run seed
        artifacts: Paths written by the command

    Returns:
        Path of manifest.json
    """
    manifest = RunManifest(
        command=command,
        code_version=__version__,
        config_hash=config_hash(config),
        seed=seed,
        artifacts=sorted(os.path.relpath(a, out_dir) for a in (artifacts or [])),
        config=effective_config(config),
    )
    path = write_json(os.path.join(out_dir, MANIFEST_NAME), manifest)
    logger.info(f"Wrote manifest for {command} ({manifest.config_hash[:12]}) to {path}")
    return path


def write_pgm(path: str, image: np.ndarray) -> str:
    """
    Export one image as binary 8-bit PGM; channels are averaged.

    Args:
        path: Output file
        image: ``(C, H, W)`` or ``(H, W)`` array in [0, 1]
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image.mean(axis=0)
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    _ensure_dir(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def write_pgm_batch(out_dir: str, prefix: str, images: np.ndarray) -> List[str]:
    return [write_pgm(os.path.join(out_dir, f"{prefix}_{i:04d}.pgm"), img) for i, img in enumerate(images)]
