"""
Data service for ScoreAG

This module generates the synthetic datasets, splits them and resolves the
dataset a run configuration asks for.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np

from scoreag.core.exception_handlers import ContractError, DatasetError
from scoreag.schemas.config import DataConfig

# Set up logger
logger = logging.getLogger(__name__)

Provenance = Literal["synthetic-shapes", "synthetic-2d", "idx-file", "generated"]
Split = Literal["train", "eval", "all"]


@dataclass
class Dataset:
    """Images ``(n, C, H, W)`` in [0, 1] with labels in 1..K."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: Split = "all"
    provenance: Provenance = "synthetic-shapes"
    check_range: bool = True

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DatasetError(f"Images must be (n, C, H, W), got shape {self.images.shape}")
        n = self.images.shape[0]
        if n == 0:
            raise DatasetError("Dataset is empty")
        if self.labels.shape != (n,):
            raise DatasetError(f"Expected {n} labels, got shape {self.labels.shape}")
        if self.labels.min() < 1 or self.labels.max() > self.num_classes:
            raise DatasetError(f"Labels must lie in 1..{self.num_classes}")
        if self.check_range and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DatasetError("Images must lie in [0, 1]")

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.images[indices], self.labels[indices], self.num_classes, self.split, self.provenance, self.check_range
        )

    def class_counts(self) -> Dict[int, int]:
        return {k: int(np.sum(self.labels == k)) for k in range(1, self.num_classes + 1)}


# Shapes dataset

def _box(a: np.ndarray, b: np.ndarray, ha: float, hb: float) -> np.ndarray:
    return np.maximum(np.maximum(np.abs(a) - ha, np.abs(b) - hb), 0.0)


def _glyphs() -> List[Callable[[np.ndarray, np.ndarray, float, float], np.ndarray]]:
    """Distance-to-glyph functions of (dx, dy, half length, stroke width)."""
    s2 = np.sqrt(2.0)

    def diag(dx, dy, L, w):
        return _box((dx + dy) / s2, (dx - dy) / s2, L, w / 2)

    def anti(dx, dy, L, w):
        return _box((dx - dy) / s2, (dx + dy) / s2, L, w / 2)

    def hbar(dx, dy, L, w):
        return _box(dx, dy, L, w / 2)

    def vbar(dx, dy, L, w):
        return _box(dx, dy, w / 2, L)

    def radius(dx, dy):
        return np.sqrt(dx * dx + dy * dy)

    return [
        hbar,
        vbar,
        diag,
        anti,
        lambda dx, dy, L, w: np.maximum(np.abs(np.maximum(np.abs(dx), np.abs(dy)) - (L - w / 2)) - w / 2, 0.0),
        lambda dx, dy, L, w: np.maximum(np.maximum(np.abs(dx), np.abs(dy)) - 0.7 * L, 0.0),
        lambda dx, dy, L, w: np.minimum(hbar(dx, dy, L, w), vbar(dx, dy, L, w)),
        lambda dx, dy, L, w: np.minimum(diag(dx, dy, L, w), anti(dx, dy, L, w)),
        lambda dx, dy, L, w: np.maximum(radius(dx, dy) - 0.75 * L, 0.0),
        lambda dx, dy, L, w: np.maximum(np.abs(radius(dx, dy) - 0.8 * L) - w / 2, 0.0),
    ]


GLYPH_NAMES = ["hbar", "vbar", "diagonal", "antidiagonal", "box", "square", "plus", "cross", "disc", "ring"]


def gen_shapes(K: int = 10, n_per_class: int = 100, size: int = 16, rng: Optional[np.random.Generator] = None) -> Dataset:
    """
    Render K grayscale glyph classes with pose and intensity jitter.

    Args:
        K: Number of classes (at most 10)
        n_per_class: Images per class
        size: Image side length (>= 8)
        rng: Generator; a fresh seed-0 generator when omitted

    Returns:
        Shuffled dataset of shape ``(K * n_per_class, 1, size, size)``

    Raises:
        ContractError: For invalid dimensions
    """
    glyphs = _glyphs()
    if size < 8:
        raise ContractError(f"size must be at least 8, got {size}", "gen_shapes")
    if n_per_class < 1:
        raise ContractError(f"n_per_class must be positive, got {n_per_class}", "gen_shapes")
    if not 1 <= K <= len(glyphs):
        raise ContractError(f"K must lie in 1..{len(glyphs)}, got {K}", "gen_shapes")
    rng = rng or np.random.default_rng(0)

    coords = np.arange(size, dtype=np.float64) + 0.5
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    n = K * n_per_class
    images = np.zeros((n, 1, size, size))
    labels = np.repeat(np.arange(1, K + 1), n_per_class)
    for i, label in enumerate(labels):
        shift = rng.uniform(-size / 10, size / 10, size=2)
        scale = rng.uniform(0.8, 1.1)
        intensity = rng.uniform(0.7, 1.0)
        half = 0.35 * size * scale
        width = max(1.5, size / 8) * scale
        dx = xx - (size / 2 + shift[0])
        dy = yy - (size / 2 + shift[1])
        dist = glyphs[label - 1](dx, dy, half, width)
        img = intensity * np.clip(1.0 - dist, 0.0, 1.0) + rng.normal(0.0, 0.03, size=(size, size))
        images[i, 0] = np.clip(img, 0.0, 1.0)

    order = rng.permutation(n)
    logger.info(f"Generated shapes dataset: K={K}, n={n}, size={size}")
    return Dataset(images[order], labels[order], K, provenance="synthetic-shapes")


# 2D blobs

BLOB_STD = 1.0


def gen_blobs_2d(
    K: int = 2,
    n_per_class: int = 200,
    separation: float = 6.0,
    rng: Optional[np.random.Generator] = None,
) -> Dataset:
    """
    Two Gaussian blobs (unit std) ``separation`` apart, stored as 1x1x2 images.

    Points are mapped affinely into [0, 1] with a margin of four standard
    deviations around the centres and clipped.

    Raises:
        ContractError: If K > 2 or the arguments are invalid
    """
    if not 1 <= K <= 2:
        raise ContractError(f"gen_blobs_2d supports K <= 2, got {K}", "gen_blobs_2d")
    if n_per_class < 1 or separation < 0:
        raise ContractError("n_per_class must be positive and separation non-negative", "gen_blobs_2d")
    rng = rng or np.random.default_rng(0)

    centres = np.array([[-separation / 2, 0.0], [separation / 2, 0.0]])[:K]
    labels = np.repeat(np.arange(1, K + 1), n_per_class)
    points = centres[labels - 1] + rng.normal(0.0, BLOB_STD, size=(labels.size, 2))
    radius = separation / 2 + 4 * BLOB_STD
    scaled = np.clip((points + radius) / (2 * radius), 0.0, 1.0)

    order = rng.permutation(labels.size)
    return Dataset(scaled[order].reshape(-1, 1, 1, 2), labels[order], K, provenance="synthetic-2d")


# Splits and subsets

def train_eval_split(dataset: Dataset, eval_fraction: float = 0.2, rng: Optional[np.random.Generator] = None):
    """
    Stratified split; each class contributes ``ceil(eval_fraction * n_k)`` eval samples.

    Returns:
        Tuple of (train, eval) datasets

    Raises:
        DatasetError: If a split would be empty
    """
    if not 0 < eval_fraction < 1:
        raise ContractError(f"eval_fraction must lie in (0, 1), got {eval_fraction}", "train_eval_split")
    rng = rng or np.random.default_rng(0)
    train_idx, eval_idx = [], []
    for k in range(1, dataset.num_classes + 1):
        idx = np.flatnonzero(dataset.labels == k)
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        n_eval = int(np.ceil(eval_fraction * idx.size))
        if n_eval >= idx.size and idx.size > 1:
            n_eval = idx.size - 1
        eval_idx.append(idx[:n_eval])
        train_idx.append(idx[n_eval:])
    train_idx = np.sort(np.concatenate(train_idx))
    eval_idx = np.sort(np.concatenate(eval_idx))
    if train_idx.size == 0 or eval_idx.size == 0:
        raise DatasetError("Split produced an empty partition")
    train, evaluation = dataset.subset(train_idx), dataset.subset(eval_idx)
    train.split, evaluation.split = "train", "eval"
    return train, evaluation


def balanced_subset(dataset: Dataset, n: int) -> Dataset:
    """First ``n`` samples taken round-robin over classes, in dataset order."""
    per_class = [list(np.flatnonzero(dataset.labels == k)) for k in range(1, dataset.num_classes + 1)]
    picked: List[int] = []
    depth = 0
    while len(picked) < min(n, len(dataset)):
        for idx in per_class:
            if depth < len(idx) and len(picked) < n:
                picked.append(idx[depth])
        depth += 1
    return dataset.subset(picked)


# Persistence and resolution

def save_dataset(dataset: Dataset, path: str) -> None:
    np.savez(
        path,
        images=dataset.images,
        labels=dataset.labels,
        num_classes=dataset.num_classes,
        provenance=dataset.provenance,
        split=dataset.split,
    )


def load_dataset(path: str) -> Dataset:
    """
    Raises:
        DatasetError: If the file is missing or malformed
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            return Dataset(
                data["images"],
                data["labels"],
                int(data["num_classes"]),
                split=str(data["split"]),
                provenance=str(data["provenance"]),
            )
    except (OSError, KeyError, ValueError) as e:
        raise DatasetError(f"Cannot load dataset from {path}: {str(e)}", {"path": path})


def generate(config: DataConfig, seed: int) -> Dataset:
    """Build the full dataset a data section describes."""
    rng = np.random.default_rng(seed)
    if config.path:
        return load_dataset(config.path)
    if config.source == "shapes":
        return gen_shapes(config.num_classes, config.n_per_class, config.size, rng)
    if config.source == "blobs":
        return gen_blobs_2d(config.num_classes, config.n_per_class, config.separation, rng)
    from scoreag.io.idx import load_idx_dataset

    return load_idx_dataset(config.idx_images, config.idx_labels, config.num_classes)


def load_splits(config: DataConfig, seed: int) -> Tuple[Dataset, Dataset]:
    """Deterministic (train, eval) datasets for a run."""
    dataset = generate(config, seed)
    if dataset.num_classes != config.num_classes:
        raise DatasetError(
            f"Dataset has {dataset.num_classes} classes, config expects {config.num_classes}"
        )
    return train_eval_split(dataset, config.eval_fraction, np.random.default_rng([seed, 1]))
