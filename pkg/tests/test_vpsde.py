"""
Tests for the variance-preserving noise schedule and transition kernel.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from scoreag.core.exception_handlers import DegenerateKernelError, InvalidTimeError
from scoreag.diffusion import vpsde
from scoreag.diffusion.vpsde import NoiseSchedule

pytestmark = pytest.mark.vpsde


@pytest.mark.unit
class TestNoiseSchedule:
    """Test suite for schedule validation and kernel coefficients."""

    def test_defaults(self):
        """Test the default schedule constants."""
        schedule = NoiseSchedule()
        assert (schedule.beta_min, schedule.beta_max, schedule.t_eps) == (0.1, 20.0, 1e-3)

    def test_rejects_inverted_betas(self):
        """Test that beta_min above beta_max is invalid."""
        with pytest.raises(ValidationError):
            NoiseSchedule(beta_min=5.0, beta_max=1.0)

    def test_rejects_unknown_fields(self):
        """Test that unknown schedule keys are rejected."""
        with pytest.raises(ValidationError):
            NoiseSchedule(beta_mid=1.0)

    def test_beta_is_linear(self, schedule):
        """Test that beta interpolates linearly between its endpoints."""
        assert vpsde.beta(schedule, 0.0) == pytest.approx(0.1)
        assert vpsde.beta(schedule, 1.0) == pytest.approx(20.0)
        assert vpsde.beta(schedule, 0.5) == pytest.approx(10.05)

    def test_coefficients_at_endpoints(self, schedule):
        """Test alpha and sigma2 at t = 0 and t = 1."""
        # Act
        c0 = vpsde.coeffs(schedule, 0.0)
        c1 = vpsde.coeffs(schedule, 1.0)

        # Assert
        assert c0.alpha == 1.0 and c0.sigma2 == 0.0
        assert c1.alpha == pytest.approx(np.exp(-0.5 * (0.1 + 0.5 * 19.9)))
        assert c1.alpha ** 2 + c1.sigma2 == pytest.approx(1.0)

    def test_variance_preserved(self, schedule):
        """Test that alpha^2 + sigma2 = 1 across the time range."""
        # Act
        alpha, sigma2 = vpsde.alpha_sigma2(schedule, np.linspace(0.0, 1.0, 11))

        # Assert
        np.testing.assert_allclose(alpha ** 2 + sigma2, np.ones(11))

    def test_sigma2_accurate_near_zero(self, schedule):
        """Test that sigma2 keeps precision at tiny times."""
        c = vpsde.coeffs(schedule, 1e-8)
        assert c.sigma2 == pytest.approx(0.1 * 1e-8, rel=1e-6)

    @pytest.mark.parametrize("t", [-0.1, 1.5])
    def test_time_outside_unit_interval(self, schedule, t):
        """Test that times outside [0, 1] are rejected."""
        with pytest.raises(InvalidTimeError):
            vpsde.coeffs(schedule, t)


@pytest.mark.unit
class TestKernel:
    """Test suite for perturbation, kernel score and SDE coefficients."""

    def test_perturb_matches_kernel(self, schedule):
        """Test that perturb computes alpha x0 + sigma noise."""
        # Arrange
        x0 = np.array([[1.0, -1.0]])
        noise = np.array([[0.5, 0.25]])
        c = vpsde.coeffs(schedule, 0.3)

        # Act
        xt = vpsde.perturb(x0, 0.3, noise, schedule)

        # Assert
        np.testing.assert_allclose(xt.data, c.alpha * x0 + c.sigma * noise)

    def test_kernel_score_recovers_noise(self, schedule):
        """Test that the kernel score equals -noise / sigma."""
        # Arrange
        x0 = np.array([[0.2, 0.8]])
        noise = np.array([[1.0, -2.0]])
        c = vpsde.coeffs(schedule, 0.5)
        xt = vpsde.perturb(x0, 0.5, noise, schedule)

        # Act
        score = vpsde.kernel_score(xt, x0, 0.5, schedule)

        # Assert
        np.testing.assert_allclose(score.data, -noise / c.sigma)

    def test_kernel_score_degenerate_at_zero(self, schedule):
        """Test that the kernel score is undefined at t = 0."""
        x0 = np.zeros((1, 2))
        with pytest.raises(DegenerateKernelError):
            vpsde.kernel_score(x0, x0, 0.0, schedule)

    def test_drift_and_diffusion(self, schedule):
        """Test the forward drift and diffusion coefficient."""
        # Act
        f = vpsde.drift(schedule, np.array([2.0]), 1.0)
        g = vpsde.diffusion(schedule, 1.0)

        # Assert
        np.testing.assert_allclose(f.data, [-20.0])
        assert g == pytest.approx(np.sqrt(20.0))

    def test_forward_marginal_statistics(self, schedule):
        """Test that perturbed samples have the kernel mean and variance."""
        # Arrange
        rng = np.random.default_rng(7)
        x0 = np.full((20000, 1), 0.5)
        c = vpsde.coeffs(schedule, 0.4)

        # Act
        xt = vpsde.perturb(x0, 0.4, rng.standard_normal(x0.shape), schedule).data

        # Assert
        assert xt.mean() == pytest.approx(0.5 * c.alpha, abs=0.03)
        assert xt.var() == pytest.approx(c.sigma2, rel=0.05)
