"""
Tests for the FGSM and PGD baselines.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from scoreag.core.exception_handlers import ContractError, InvalidSpecError
from scoreag.schemas.config import BaselineConfig
from scoreag.services.baseline_service import (
    NormBudget,
    ascent_direction,
    budget_from_config,
    fgsm,
    loss_gradient,
    pgd,
    project,
    random_start,
    run_baseline,
)

pytestmark = pytest.mark.baselines


@pytest.mark.unit
class TestBudget:
    """Test suite for projection, directions and random starts."""

    def test_linf_projection(self):
        """Test that L-inf projection clips each coordinate."""
        budget = NormBudget(norm="linf", epsilon=0.1, step_size=0.01)
        np.testing.assert_allclose(project(np.array([[0.5, -0.05, -0.3]]), budget), [[0.1, -0.05, -0.1]])

    def test_l2_projection(self):
        """Test that L2 projection rescales only rows outside the ball."""
        # Arrange
        budget = NormBudget(norm="l2", epsilon=1.0, step_size=0.1)
        delta = np.array([[3.0, 4.0], [0.3, 0.4]])

        # Act
        projected = project(delta, budget)

        # Assert
        np.testing.assert_allclose(projected, [[0.6, 0.8], [0.3, 0.4]])

    def test_ascent_direction(self):
        """Test sign steps for L-inf and unit steps for L2, with zero kept at zero."""
        grad = np.array([[3.0, -4.0], [0.0, 0.0]])
        np.testing.assert_array_equal(ascent_direction(grad, "linf"), [[1.0, -1.0], [0.0, 0.0]])
        np.testing.assert_allclose(ascent_direction(grad, "l2"), [[0.6, -0.8], [0.0, 0.0]])

    @pytest.mark.parametrize("norm", ["l2", "linf"])
    def test_random_start_inside_ball(self, norm):
        """Test that random starts lie inside the epsilon ball."""
        # Arrange
        budget = NormBudget(norm=norm, epsilon=0.2, step_size=0.01)

        # Act
        delta = random_start((100, 1, 1, 2), budget, np.random.default_rng(0))

        # Assert
        rows = delta.reshape(100, -1)
        if norm == "l2":
            assert np.linalg.norm(rows, axis=1).max() <= 0.2 + 1e-12
        else:
            assert np.abs(rows).max() <= 0.2

    def test_budget_defaults(self):
        """Test the default PGD step size and the FGSM budget."""
        pgd_budget = budget_from_config(BaselineConfig(attack="pgd-l2", epsilon=0.5, n_iter=10))
        fgsm_budget = budget_from_config(BaselineConfig(attack="fgsm", epsilon=0.1))
        assert pgd_budget.norm == "l2" and pgd_budget.step_size == pytest.approx(0.125)
        assert (fgsm_budget.step_size, fgsm_budget.n_iter) == (0.1, 1)

    def test_budget_validation(self):
        """Test that a non-positive epsilon is rejected."""
        with pytest.raises(ValidationError):
            NormBudget(epsilon=0.0, step_size=0.1)


@pytest.mark.unit
class TestAttacks:
    """Test suite for FGSM and PGD."""

    def test_loss_gradient_targeted_sign(self, blob_classifier, blobs):
        """Test that with two classes the targeted and untargeted objectives ascend the same way."""
        # Arrange
        x = blobs.images[:4]
        labels = blobs.labels[:4]
        other = 3 - labels[0]

        # Act
        ce, g_ce = loss_gradient(blob_classifier, x[:1], labels[:1])
        logp, g_target = loss_gradient(blob_classifier, x[:1], labels[:1], target_class=int(other))

        # Assert
        assert ce[0] > 0
        assert logp[0] <= 0
        assert float(np.sum(g_ce * g_target)) > 0

    def test_fgsm_equals_single_pgd_step(self, blob_classifier, blobs):
        """Test that FGSM is bit-identical to one zero-start PGD step of size epsilon."""
        # Arrange
        x, y = blobs.images[:10], blobs.labels[:10]
        budget = NormBudget(norm="linf", epsilon=0.05, step_size=0.05, n_iter=1)

        # Act
        a = fgsm(blob_classifier, x, y, 0.05)
        b = pgd(blob_classifier, x, y, budget, random_init=False, restarts=1)

        # Assert
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("norm", ["l2", "linf"])
    def test_pgd_feasible(self, blob_classifier, blobs, norm):
        """Test that PGD outputs stay within the budget and the unit box."""
        # Arrange
        x, y = blobs.images[:20], blobs.labels[:20]
        budget = NormBudget(norm=norm, epsilon=0.1, step_size=0.03, n_iter=10)

        # Act
        adv = pgd(blob_classifier, x, y, budget, rng=np.random.default_rng(1), restarts=2)

        # Assert
        diff = (adv - x).reshape(20, -1)
        if norm == "l2":
            assert np.linalg.norm(diff, axis=1).max() <= 0.1 + 1e-9
        else:
            assert np.abs(diff).max() <= 0.1 + 1e-9
        assert adv.min() >= 0.0 and adv.max() <= 1.0

    def test_pgd_large_budget_flips_labels(self, blob_classifier, blobs):
        """Test that a budget spanning the class gap fools the classifier."""
        # Arrange
        x, y = blobs.images[:10], blobs.labels[:10]
        config = BaselineConfig(attack="pgd-linf", epsilon=0.6, step_size=0.1, n_iter=20)

        # Act
        adv, results = run_baseline(blob_classifier, x, y, config, seed=0)

        # Assert
        assert np.mean([r.success for r in results]) >= 0.8
        assert adv.shape == x.shape

    def test_targeted_pgd(self, blob_classifier, blobs):
        """Test that targeted PGD lands class-1 samples in class 2."""
        # Arrange
        mask = blobs.labels == 1
        x, y = blobs.images[mask][:5], blobs.labels[mask][:5]
        config = BaselineConfig(attack="pgd-linf", epsilon=0.6, step_size=0.1, n_iter=20, target_class=2)

        # Act
        _, results = run_baseline(blob_classifier, x, y, config, seed=0)

        # Assert
        assert all(r.y_target == 2 for r in results)
        assert all(r.success == (r.y_pred_after == 2) for r in results)
        assert np.mean([r.success for r in results]) >= 0.8

    def test_target_equal_to_label(self, blob_classifier, blobs):
        """Test that targeting a sample's own class is rejected."""
        budget = NormBudget(epsilon=0.1, step_size=0.01)
        with pytest.raises(InvalidSpecError):
            pgd(blob_classifier, blobs.images[:1], blobs.labels[:1], budget, target_class=int(blobs.labels[0]))

    def test_single_image(self, blob_classifier, blobs):
        """Test that a single image comes back unbatched."""
        adv = fgsm(blob_classifier, blobs.images[0], int(blobs.labels[0]), 0.05)
        assert adv.shape == blobs.images[0].shape

    def test_input_out_of_range(self, blob_classifier):
        """Test that inputs outside [0, 1] are rejected."""
        with pytest.raises(ContractError):
            fgsm(blob_classifier, np.full((1, 1, 1, 2), 1.5), [1], 0.1)

    def test_label_count_mismatch(self, blob_classifier, blobs):
        """Test that one label per input is required."""
        with pytest.raises(ContractError):
            fgsm(blob_classifier, blobs.images[:3], [1, 2], 0.1)

    def test_results_report_distances(self, blob_classifier, blobs):
        """Test that baseline results carry per-sample distances within budget."""
        # Act
        adv, results = run_baseline(blob_classifier, blobs.images[:5], blobs.labels[:5],
                                    BaselineConfig(attack="fgsm", epsilon=0.05), seed=0)

        # Assert
        assert [r.index for r in results] == list(range(5))
        assert all(r.linf <= 0.05 + 1e-12 for r in results)
        assert all(r.mode == "fgsm" for r in results)
        np.testing.assert_array_equal(np.stack([r.output for r in results]), adv)
