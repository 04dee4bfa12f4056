"""
Tests for the score network, the classifier and the analytic scores.
"""

import numpy as np
import pytest

from scoreag.core.exception_handlers import ContractError, ShapeMismatchError
from scoreag.diffcore import ops
from scoreag.diffcore.tensor import Tensor, gradients
from scoreag.diffusion.vpsde import alpha_sigma2
from scoreag.models.analytic import PointMassScore, UnitGaussianScore
from scoreag.models.classifier import Classifier, classify, extract_features, labels_from_logits, predict_labels
from scoreag.models.score_model import broadcast_labels, time_embedding
from scoreag.schemas.config import ClassifierConfig

pytestmark = pytest.mark.models


@pytest.mark.unit
class TestScoreModel:
    """Test suite for the class-conditional score network."""

    def test_score_shape(self, tiny_score_model):
        """Test that the score has the shape of its input."""
        # Arrange
        x = np.random.default_rng(0).normal(size=(3, 1, 1, 2))

        # Act
        score = tiny_score_model.score(x, 0.5, [1, 2, 0])

        # Assert
        assert score.shape == (3, 1, 1, 2)

    def test_class_embedding_has_unconditional_row(self, tiny_score_model):
        """Test that the embedding table holds K + 1 rows."""
        assert tiny_score_model.params["class_embed"].shape[0] == tiny_score_model.num_classes + 1

    def test_unconditional_equals_label_zero(self, tiny_score_model):
        """Test that y=None selects the same embedding as label 0."""
        # Arrange
        x = np.ones((2, 1, 1, 2)) * 0.3

        # Act
        a = tiny_score_model.score(x, 0.4, None)
        b = tiny_score_model.score(x, 0.4, 0)

        # Assert
        np.testing.assert_array_equal(a.data, b.data)

    def test_label_changes_score(self, tiny_score_model):
        """Test that different class labels give different scores."""
        x = np.ones((1, 1, 1, 2)) * 0.3
        a = tiny_score_model.score(x, 0.4, 1)
        b = tiny_score_model.score(x, 0.4, 2)
        assert not np.allclose(a.data, b.data)

    def test_label_out_of_range(self):
        """Test that labels above K are rejected."""
        with pytest.raises(ContractError):
            broadcast_labels([3], 1, num_classes=2)

    def test_score_undefined_at_zero(self, tiny_score_model):
        """Test that the network score is not defined at t = 0."""
        with pytest.raises(ContractError):
            tiny_score_model.score(np.zeros((1, 1, 1, 2)), 0.0, 1)

    def test_wrong_input_shape(self, tiny_score_model):
        """Test that a batch with the wrong trailing shape is rejected."""
        with pytest.raises(ShapeMismatchError):
            tiny_score_model.score(np.zeros((1, 2)), 0.5, 1)

    def test_weight_sets(self, tiny_score_model):
        """Test that live and EMA weights give different scores once they diverge."""
        # Arrange
        model = tiny_score_model
        model.set_params([p + 0.1 for p in model.param_list("live")], "live")
        x = np.ones((1, 1, 1, 2)) * 0.5

        # Act
        live = model.score(x, 0.5, 1, weights="live")
        ema = model.score(x, 0.5, 1, weights="ema")

        # Assert
        assert not np.allclose(live.data, ema.data)
        assert model.use_weights("live") is model
        np.testing.assert_array_equal(model.score(x, 0.5, 1).data, live.data)

    def test_score_differentiable_in_x(self, tiny_score_model):
        """Test that gradients flow from the score back to the input."""
        # Arrange
        x = Tensor(np.full((1, 1, 1, 2), 0.2), requires_grad=True)

        # Act
        (grad,) = gradients(ops.sum(tiny_score_model.score(x, 0.5, 1)), [x])

        # Assert
        assert grad.shape == x.shape
        assert np.any(grad != 0)

    def test_time_embedding(self):
        """Test the sinusoidal embedding shape and value at t = 0."""
        emb = time_embedding(np.array([0.0, 0.5]), 8)
        assert emb.shape == (2, 8)
        np.testing.assert_allclose(emb[0], [0, 0, 0, 0, 1, 1, 1, 1])

    def test_zero_output_is_gaussian_score(self, tiny_score_model, schedule):
        """Test that a zero trunk output leaves the score of N(0, sigma_data^2 I) data."""
        # Arrange
        tiny_score_model.set_sigma_data(0.4)
        for which in ("live", "ema"):
            params = [np.zeros_like(p) if name.startswith("out.") else p
                      for name, p in zip(tiny_score_model.names, tiny_score_model.param_list(which))]
            tiny_score_model.set_params(params, which)
        x = np.random.default_rng(3).normal(size=(4, 1, 1, 2))
        t = np.array([0.01, 0.2, 0.6, 1.0])

        # Act
        score = tiny_score_model.score(x, t, [1, 2, 0, 1]).numpy()

        # Assert
        alpha, sigma2 = alpha_sigma2(schedule, t)
        expected = -x / (alpha ** 2 * 0.16 + sigma2).reshape(-1, 1, 1, 1)
        np.testing.assert_allclose(score, expected, rtol=1e-12)

    def test_sigma_data_must_be_positive(self, tiny_score_model):
        """Test that a non-positive data scale is rejected."""
        with pytest.raises(ContractError):
            tiny_score_model.set_sigma_data(0.0)

    def test_set_params_rejects_wrong_shapes(self, tiny_score_model):
        """Test that replacement buffers must keep the parameter shapes."""
        params = tiny_score_model.param_list()
        params[0] = np.zeros((1, 1))
        with pytest.raises(ShapeMismatchError):
            tiny_score_model.set_params(params)

    def test_header_describes_model(self, tiny_score_model):
        """Test that the header carries kind, shapes and config."""
        header = tiny_score_model.header()
        assert header["model_kind"] == "score_model"
        assert header["input_shape"] == [1, 1, 2]
        assert header["config"]["score_model"]["hidden"] == 16
        assert len(header["names"]) == len(header["shapes"])


@pytest.mark.unit
class TestClassifier:
    """Test suite for the classifier and its helpers."""

    def test_conv_needs_divisible_size(self):
        """Test that the conv trunk rejects sizes not divisible by 4."""
        with pytest.raises(ContractError):
            Classifier((1, 6, 6), 3, ClassifierConfig(arch="conv"))

    def test_conv_logits_and_features(self, shapes_small):
        """Test conv classifier output shapes."""
        # Arrange
        classifier = Classifier((1, 8, 8), 4, ClassifierConfig(arch="conv", feature_dim=12))

        # Act
        result = classify(classifier, shapes_small.images[:5])

        # Assert
        assert result.logits.shape == (5, 4)
        assert result.features.shape == (5, 12)
        assert set(result.labels) <= {1, 2, 3, 4}

    def test_classify_single_image(self, untrained_classifier):
        """Test that a single image is treated as a batch of one."""
        result = classify(untrained_classifier, np.array([[[0.2, 0.7]]]))
        assert result.labels.shape == (1,)
        assert result.label in (1, 2)

    def test_classify_clamps_out_of_range(self, untrained_classifier):
        """Test that inputs outside [0, 1] are clamped and flagged."""
        # Arrange
        inside = np.array([[[[1.0, 0.0]]]])
        outside = np.array([[[[3.0, -2.0]]]])

        # Act
        a = classify(untrained_classifier, inside)
        b = classify(untrained_classifier, outside)

        # Assert
        assert b.clamped and not a.clamped
        np.testing.assert_array_equal(a.logits, b.logits)

    def test_ties_go_to_lowest_class(self):
        """Test that equal logits resolve to the lowest 1-based class."""
        np.testing.assert_array_equal(labels_from_logits([[0.5, 0.5, 0.1], [0.0, 1.0, 1.0]]), [1, 2])

    def test_probabilities_sum_to_one(self, untrained_classifier, blobs):
        """Test that class probabilities are normalised."""
        probs = classify(untrained_classifier, blobs.images[:4]).probabilities()
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(4))

    def test_trained_classifier_separates_blobs(self, blob_classifier, blobs):
        """Test that the trained blob classifier is accurate."""
        predicted = predict_labels(blob_classifier, blobs.images, batch_size=64)
        assert np.mean(predicted == blobs.labels) >= 0.9

    def test_extract_features_shape(self, blob_classifier, blobs):
        """Test that features are returned for every input."""
        assert extract_features(blob_classifier, blobs.images, batch_size=50).shape == (len(blobs), 4)

    def test_default_weights_are_live(self, untrained_classifier):
        """Test that classifiers evaluate with their live weights."""
        assert untrained_classifier.weights == "live"


@pytest.mark.unit
class TestAnalyticScores:
    """Test suite for the closed-form oracle scores."""

    def test_unit_gaussian_score(self, gaussian_score):
        """Test that the N(0, I) score is -x."""
        x = np.array([[[[0.5, -1.5]]]])
        np.testing.assert_array_equal(gaussian_score.score(x, 0.3).data, -x)

    def test_point_mass_score_matches_kernel(self, point_mass, schedule):
        """Test that the point-mass score is the kernel score around its centre."""
        # Arrange
        from scoreag.diffusion import vpsde

        x = np.array([[0.1, 0.2]])
        expected = vpsde.kernel_score(x, point_mass.center[None, :], 0.6, schedule)

        # Act
        score = point_mass.score(x, 0.6)

        # Assert
        np.testing.assert_allclose(score.data, expected.data)

    def test_point_mass_exact_flow_endpoints(self, point_mass):
        """Test that the exact flow is the identity at its start time."""
        x1 = np.array([1.0, -1.0])
        np.testing.assert_allclose(point_mass.exact_flow(x1, 1.0), x1)

    def test_point_mass_undefined_at_zero(self, point_mass):
        """Test that the point-mass score is undefined at t = 0."""
        with pytest.raises(ContractError):
            point_mass.score(np.zeros((1, 2)), 0.0)

    def test_shape_checked(self):
        """Test that the analytic scores validate trailing shapes."""
        with pytest.raises(ShapeMismatchError):
            UnitGaussianScore((1, 1, 2)).score(np.zeros((1, 3)), 0.5)
        with pytest.raises(ShapeMismatchError):
            PointMassScore(np.zeros(2)).score(np.zeros((1, 3)), 0.5)
