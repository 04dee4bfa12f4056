"""
Image classifier f: [0, 1]^shape -> {1..K}.

Two trunks are available: a small convolutional net (two 3x3 conv blocks with
2x2 average pooling) for images, and an MLP for flat inputs such as the 2D
blobs. Both end in a ``feature_dim`` penultimate layer exposed for the
Fréchet feature distance.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from scoreag.core.exception_handlers import ContractError
from scoreag.diffcore import ops
from scoreag.diffcore.tensor import Tensor, as_tensor
from scoreag.models.base import Module, WeightSet, glorot, he_conv
from scoreag.schemas.config import ClassifierConfig

# Set up logger
logger = logging.getLogger(__name__)

_ACTIVATIONS = {"relu": ops.relu, "silu": ops.silu, "tanh": ops.tanh}


@dataclass
class Classification:
    """Result of ``classify``; labels are 1-based."""

    labels: np.ndarray
    logits: np.ndarray
    features: np.ndarray
    clamped: bool = False

    @property
    def label(self) -> int:
        return int(self.labels[0])

    def probabilities(self) -> np.ndarray:
        shifted = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


class Classifier(Module):
    """Small conv or MLP classifier with EMA weights."""

    model_kind = "classifier"

    def __init__(
        self,
        input_shape: Sequence[int],
        num_classes: int,
        config: Optional[ClassifierConfig] = None,
        seed: int = 0,
    ):
        super().__init__(input_shape, num_classes)
        self.config = config or ClassifierConfig()
        self.feature_dim = self.config.feature_dim
        # Classifiers are evaluated with live weights unless told otherwise
        self.weights = "live"
        if self.config.arch == "conv":
            if len(self.input_shape) != 3 or self.input_shape[1] % 4 or self.input_shape[2] % 4:
                raise ContractError(
                    f"conv classifier needs (C, H, W) with H, W divisible by 4, got {self.input_shape}",
                    "classifier",
                )
        self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        if cfg.arch == "conv":
            c, h, w = self.input_shape
            c1, c2 = cfg.channels
            self._add("conv1.weight", he_conv(rng, c1, c, 3))
            self._add("conv1.bias", np.zeros(c1))
            self._add("conv2.weight", he_conv(rng, c2, c1, 3))
            self._add("conv2.bias", np.zeros(c2))
            width = c2 * (h // 4) * (w // 4)
        else:
            width = int(np.prod(self.input_shape))
            self._add("hidden.weight", glorot(rng, width, cfg.hidden))
            self._add("hidden.bias", np.zeros(cfg.hidden))
            width = cfg.hidden
        self._add("features.weight", glorot(rng, width, cfg.feature_dim))
        self._add("features.bias", np.zeros(cfg.feature_dim))
        self._add("head.weight", glorot(rng, cfg.feature_dim, self.num_classes))
        self._add("head.bias", np.zeros(self.num_classes))
        self.reset_ema()

    def config_dict(self) -> Dict[str, Any]:
        return {"classifier": self.config.model_dump(exclude={"checkpoint"})}

    def forward_with(self, p: Dict[str, Tensor], x: Tensor):
        """
        Logits and penultimate features for a batch.

        Args:
            p: Parameter tensors
            x: Batch shaped ``(n, *input_shape)``

        Returns:
            Tuple of logits ``(n, K)`` and features ``(n, feature_dim)``
        """
        x = as_tensor(x)
        self.check_batch(x, "classifier")
        act = _ACTIVATIONS[self.config.activation]
        if self.config.arch == "conv":
            h = ops.avg_pool2d(act(ops.conv2d(x, p["conv1.weight"], p["conv1.bias"])))
            h = ops.avg_pool2d(act(ops.conv2d(h, p["conv2.weight"], p["conv2.bias"])))
            h = ops.flatten(h)
        else:
            h = act(ops.affine(ops.flatten(x), p["hidden.weight"], p["hidden.bias"]))
        features = act(ops.affine(h, p["features.weight"], p["features.bias"]))
        logits = ops.affine(features, p["head.weight"], p["head.bias"])
        return logits, features

    def logits(self, x: Tensor, weights: Optional[WeightSet] = None) -> Tensor:
        """Differentiable logits under constant weights."""
        logits, _ = self.forward_with(self.tensors(weights), x)
        return logits


def labels_from_logits(logits: np.ndarray) -> np.ndarray:
    """1-based argmax per row; ties go to the lowest class index."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    return np.argmax(logits, axis=1) + 1


def classify(classifier: Classifier, x: np.ndarray, weights: Optional[WeightSet] = None) -> Classification:
    """
    Predict labels for one image or a batch.

    Inputs outside [0, 1] are clamped and the result is flagged. Ties in the
    logits go to the lowest class index.

    Args:
        classifier: Trained classifier
        x: One image shaped ``input_shape`` or a batch of them
        weights: Weight set, defaulting to the classifier's own choice

    Returns:
        Labels (1-based), logits and penultimate features for every input

    Raises:
        ShapeMismatchError: If ``x`` does not match the classifier input shape
    """
    batch, _ = classifier.batch_view(x, "classify")
    clamped = bool(np.any(batch < 0.0) or np.any(batch > 1.0))
    if clamped:
        logger.warning("Classifier input outside [0, 1]; values were clamped")
        batch = np.clip(batch, 0.0, 1.0)
    logits, features = classifier.forward_with(classifier.tensors(weights), Tensor._wrap(np.array(batch)))
    labels = labels_from_logits(logits.data)
    return Classification(labels=labels, logits=logits.numpy(), features=features.numpy(), clamped=clamped)


def predict_labels(classifier: Classifier, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Labels for a large batch, evaluated in chunks."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(
        [classify(classifier, images[i:i + batch_size]).labels for i in range(0, images.shape[0], batch_size)]
    )


def extract_features(classifier: Classifier, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Penultimate features for a large batch."""
    images = np.asarray(images, dtype=np.float64)
    return np.concatenate(
        [classify(classifier, images[i:i + batch_size]).features for i in range(0, images.shape[0], batch_size)]
    )
