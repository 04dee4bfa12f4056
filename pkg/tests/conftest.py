"""
Test fixtures for ScoreAG.

This module contains fixtures used across the test modules: seeded
generators, small synthetic datasets, analytic oracle scores, quickly trained
desk-scale models and temporary run directories.
"""

import os

os.environ.setdefault("ENVIRONMENT", "test")
os.environ.setdefault("PROGRESS_BARS", "false")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from scoreag.diffusion.vpsde import NoiseSchedule  # noqa: E402
from scoreag.models.analytic import PointMassScore, UnitGaussianScore  # noqa: E402
from scoreag.models.classifier import Classifier  # noqa: E402
from scoreag.models.score_model import ScoreModel  # noqa: E402
from scoreag.schemas.config import ClassifierConfig, SamplerConfig, ScoreModelConfig, TrainConfig  # noqa: E402
from scoreag.services.data_service import gen_blobs_2d, gen_shapes  # noqa: E402
from scoreag.services.training_service import train_classifier  # noqa: E402

BLOB_SHAPE = (1, 1, 2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def schedule() -> NoiseSchedule:
    return NoiseSchedule()


@pytest.fixture(scope="session")
def blobs():
    """Well separated two-class blobs as 1x1x2 images."""
    return gen_blobs_2d(K=2, n_per_class=100, separation=6.0, rng=np.random.default_rng(3))


@pytest.fixture(scope="session")
def shapes_small():
    return gen_shapes(K=4, n_per_class=6, size=8, rng=np.random.default_rng(5))


def blob_classifier_config(epochs: int = 30) -> ClassifierConfig:
    return ClassifierConfig(
        arch="mlp",
        hidden=16,
        feature_dim=4,
        train=TrainConfig(epochs=epochs, batch_size=32, lr=0.2, seed=1),
    )


@pytest.fixture(scope="session")
def blob_classifier(blobs) -> Classifier:
    """MLP classifier trained on the blobs; shared read-only across tests."""
    config = blob_classifier_config()
    classifier = Classifier(BLOB_SHAPE, 2, config, seed=0)
    train_classifier(classifier, blobs, config.train)
    return classifier


@pytest.fixture
def untrained_classifier() -> Classifier:
    return Classifier(BLOB_SHAPE, 2, blob_classifier_config(), seed=0)


@pytest.fixture
def tiny_score_model(schedule) -> ScoreModel:
    config = ScoreModelConfig(hidden=16, depth=2, time_embed_dim=8, class_embed_dim=4)
    return ScoreModel(BLOB_SHAPE, 2, schedule, config, seed=0)


@pytest.fixture
def gaussian_score(schedule) -> UnitGaussianScore:
    """Oracle score of N(0, I) data, compatible with the blob classifier."""
    return UnitGaussianScore(BLOB_SHAPE, schedule, num_classes=2)


@pytest.fixture
def point_mass(schedule) -> PointMassScore:
    return PointMassScore(np.array([0.3, -0.5]), schedule)


@pytest.fixture
def fast_sampler() -> SamplerConfig:
    return SamplerConfig(n_steps=20, kind="reverse-sde")


@pytest.fixture
def guided_sampler() -> SamplerConfig:
    """Enough steps to keep Euler-Maruyama stable under moderate guidance scales."""
    return SamplerConfig(n_steps=100, kind="reverse-sde")


@pytest.fixture
def run_dir(tmp_path) -> str:
    path = tmp_path / "run"
    path.mkdir()
    return str(path)
