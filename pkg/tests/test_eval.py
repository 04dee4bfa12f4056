"""
Tests for the evaluation metrics and the attack/defense benchmark.
"""

import numpy as np
import pytest

from scoreag.core.exception_handlers import (
    ConfigurationError,
    EmptyInputError,
    MetricComputationError,
    ShapeMismatchError,
)
from scoreag.schemas.config import BaselineConfig, EvalConfig, RunConfig, SamplerConfig, TaskConfig
from scoreag.services import eval_service
from scoreag.services.eval_service import (
    accuracy,
    apply_scale,
    frechet_feature_distance,
    median_lp,
    run_benchmark,
    sweep,
)


def whitened(n: int, d: int, seed: int) -> np.ndarray:
    """Samples with exactly zero mean and identity (ddof=1) covariance."""
    x = np.random.default_rng(seed).normal(size=(n, d))
    x = x - x.mean(axis=0)
    chol = np.linalg.cholesky(np.atleast_2d(np.cov(x, rowvar=False, ddof=1)))
    return x @ np.linalg.inv(chol).T


def bench_config(**eval_fields) -> RunConfig:
    return RunConfig(
        data={"source": "blobs", "num_classes": 2},
        sampler=SamplerConfig(n_steps=100),
        task=TaskConfig(s_y=1.0, s_x=4.0),
        baseline=BaselineConfig(epsilon=0.05, n_iter=5, restarts=1),
        eval=EvalConfig(**eval_fields),
    )


@pytest.mark.unit
@pytest.mark.eval
class TestMetrics:
    """Test suite for accuracy, distances and the Frechet distance."""

    def test_accuracy_fraction(self, mocker, blob_classifier):
        """Test that accuracy is the fraction of matching labels."""
        # Arrange
        mocker.patch("scoreag.services.eval_service.predict_labels", return_value=np.array([1, 2, 1, 1]))

        # Act
        value = accuracy(blob_classifier, np.zeros((4, 1, 1, 2)), [1, 2, 2, 1])

        # Assert
        assert value == 0.75

    def test_accuracy_empty(self, blob_classifier):
        """Test that accuracy over nothing is an error."""
        with pytest.raises(EmptyInputError):
            accuracy(blob_classifier, np.zeros((0, 1, 1, 2)), [])

    def test_accuracy_length_mismatch(self, blob_classifier):
        """Test that one label per image is required."""
        with pytest.raises(ShapeMismatchError):
            accuracy(blob_classifier, np.zeros((2, 1, 1, 2)), [1])

    def test_median_odd_count(self):
        """Test the median of distances {1, 2, 3}."""
        originals = np.zeros((3, 1))
        perturbed = np.array([[1.0], [2.0], [3.0]])
        assert median_lp(originals, perturbed, 2) == 2.0

    def test_median_even_count_and_linf(self):
        """Test the even-count median and the L-inf norm."""
        originals = np.zeros((2, 2))
        perturbed = np.array([[3.0, -4.0], [1.0, 0.0]])
        assert median_lp(originals, perturbed, 2) == pytest.approx(3.0)
        assert median_lp(originals, perturbed, np.inf) == pytest.approx(2.5)

    def test_median_unsupported_norm(self):
        """Test that only L2 and L-inf are supported."""
        with pytest.raises(MetricComputationError):
            median_lp(np.zeros((1, 1)), np.ones((1, 1)), 1)

    def test_median_shape_mismatch(self):
        """Test that both batches must share a shape."""
        with pytest.raises(ShapeMismatchError):
            median_lp(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_frechet_identical_sets(self):
        """Test that a set is at distance zero from itself."""
        a = whitened(200, 1, 0)
        assert frechet_feature_distance(a, a) == pytest.approx(0.0, abs=1e-8)

    def test_frechet_mean_shift(self):
        """Test that a unit mean shift gives distance one."""
        a = whitened(200, 1, 0)
        assert frechet_feature_distance(a, a + 1.0) == pytest.approx(1.0, rel=1e-6)

    def test_frechet_scale_change(self):
        """Test that doubling the spread of unit-variance data gives distance one."""
        a = whitened(200, 1, 0)
        assert frechet_feature_distance(a, 2.0 * a) == pytest.approx(1.0, rel=1e-4)

    def test_frechet_flat_features(self):
        """Test that flat arrays are read as samples of a single feature."""
        # Arrange
        a = whitened(200, 1, 0)
        flat = a.reshape(-1)

        # Act
        shifted = frechet_feature_distance(flat, flat + 1.0)
        mixed = frechet_feature_distance(flat, 2.0 * a)

        # Assert
        assert shifted == pytest.approx(1.0, rel=1e-6)
        assert mixed == pytest.approx(1.0, rel=1e-4)

    def test_frechet_offset_in_several_dimensions(self):
        """Test that a pure offset o adds ||o||^2."""
        a = whitened(100, 3, 1)
        offset = np.array([1.0, -2.0, 0.5])
        assert frechet_feature_distance(a, a + offset) == pytest.approx(float(offset @ offset), rel=1e-6)

    def test_frechet_symmetric(self):
        """Test that the distance does not depend on argument order."""
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(50, 3)), rng.normal(1.0, 2.0, size=(60, 3))
        assert frechet_feature_distance(a, b) == pytest.approx(frechet_feature_distance(b, a), rel=1e-8)

    def test_frechet_too_few_samples(self):
        """Test that fewer than d + 1 samples cannot be compared."""
        with pytest.raises(MetricComputationError):
            frechet_feature_distance(np.ones((3, 4)), np.ones((10, 4)))

    def test_frechet_dimension_mismatch(self):
        """Test that feature sets must share a dimension."""
        with pytest.raises(MetricComputationError):
            frechet_feature_distance(np.ones((10, 3)), np.ones((10, 4)))


@pytest.mark.integration
@pytest.mark.eval
class TestBenchmark:
    """Test suite for the benchmark runner and sweeps."""

    def test_no_attack_no_defense(self, blob_classifier, blobs):
        """Test that without attack or defense all accuracies coincide."""
        # Act
        report, results = run_benchmark(bench_config(attack="none", defense="none", n_samples=20),
                                        blob_classifier, blobs)

        # Assert
        assert results == []
        assert report.adv_acc == report.clean_acc == report.robust_acc
        assert report.median_l2 is None and report.median_linf is None
        assert report.frechet == pytest.approx(0.0, abs=1e-6)
        assert report.n_samples == 20
        assert report.config["eval"]["attack"] == "none"

    def test_fgsm_benchmark(self, blob_classifier, blobs):
        """Test that a baseline attack reports medians within its budget."""
        # Act
        report, results = run_benchmark(bench_config(attack="fgsm", n_samples=20), blob_classifier, blobs)

        # Assert
        assert len(results) == 20
        assert report.median_linf <= 0.05 + 1e-12
        assert report.purified_clean_acc is None

    def test_gap_defense(self, gaussian_score, blob_classifier, blobs):
        """Test that the GAP defense reports robust and purified clean accuracy."""
        # Act
        report, _ = run_benchmark(
            bench_config(attack="fgsm", defense="gap", defense_s_x=4.0, n_samples=10),
            blob_classifier, blobs, score_model=gaussian_score,
        )

        # Assert
        assert 0.0 <= report.robust_acc <= 1.0
        assert report.purified_clean_acc is not None

    def test_gap_without_score_model(self, blob_classifier, blobs):
        """Test that the GAP defense needs a score model."""
        with pytest.raises(ConfigurationError):
            run_benchmark(bench_config(attack="none", defense="gap"), blob_classifier, blobs)

    def test_generative_attack_without_score_model(self, blob_classifier, blobs):
        """Test that GAT needs a score model."""
        with pytest.raises(ConfigurationError):
            run_benchmark(bench_config(attack="gat", n_samples=4), blob_classifier, blobs)

    def test_gat_counts_rejections(self, gaussian_score, blob_classifier, blobs):
        """Test that misclassified references are counted and excluded."""
        # Arrange
        config = bench_config(attack="gat", n_samples=10)

        # Act
        report, results = run_benchmark(config, blob_classifier, blobs, score_model=gaussian_score)

        # Assert
        assert report.n_rejected == sum(r.rejected for r in results)
        assert report.median_l2 is not None

    def test_gas_benchmark(self, gaussian_score, blob_classifier, blobs):
        """Test that GAS reports no distances and one result per sample."""
        report, results = run_benchmark(bench_config(attack="gas", n_samples=6), blob_classifier, blobs,
                                        score_model=gaussian_score)
        assert len(results) == 6
        assert report.median_l2 is None

    def test_apply_scale_routes_s_x(self):
        """Test that s_x drives the defense scale under GAP and the task scale otherwise."""
        # Arrange
        defended = bench_config(attack="gat", defense="gap")
        undefended = bench_config(attack="gat")

        # Act
        a = apply_scale(defended, "s_x", 7.0)
        b = apply_scale(undefended, "s_x", 7.0)

        # Assert
        assert a.eval.defense_s_x == 7.0 and a.task.s_x == defended.task.s_x
        assert b.task.s_x == 7.0
        assert apply_scale(undefended, "epsilon", 0.2).baseline.epsilon == 0.2
        assert apply_scale(undefended, "s_y", 3.0).task.s_y == 3.0

    def test_apply_scale_unknown(self):
        """Test that an unknown sweep parameter is a configuration error."""
        with pytest.raises(ConfigurationError):
            apply_scale(bench_config(), "lr", 0.1)

    def test_sweep_reports_in_order(self, blob_classifier, blobs):
        """Test that a sweep yields one labelled report per value."""
        # Act
        reports = sweep(bench_config(attack="fgsm", n_samples=10), "epsilon", [0.01, 0.1],
                        blob_classifier, blobs)

        # Assert
        assert [r.scale for r in reports] == [0.01, 0.1]
        assert all(r.scale_param == "epsilon" for r in reports)
        assert reports[0].median_linf <= 0.01 + 1e-12

    def test_frechet_skipped_when_underdetermined(self, mocker, blob_classifier, blobs):
        """Test that an uncomputable Frechet distance is reported as missing."""
        mocker.patch.object(
            eval_service, "frechet_feature_distance", side_effect=MetricComputationError("too few", "frechet")
        )
        report, _ = run_benchmark(bench_config(attack="none", n_samples=4), blob_classifier, blobs)
        assert report.frechet is None
