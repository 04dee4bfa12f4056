"""
Tests for the reverse-mode differentiation engine.

This module covers tensors, the primitive operations, named graphs, the
optimizer updates and the finite-difference gradient checker.
"""

import numpy as np
import pytest

from scoreag.core.exception_handlers import ContractError, NumericOverflowError, ShapeMismatchError
from scoreag.diffcore import ops
from scoreag.diffcore.gradcheck import REL_ERROR_FLOOR, check_case, primitive_cases, relative_error, run_suite
from scoreag.diffcore.graph import Graph, value_and_grad
from scoreag.diffcore.optim import NesterovSGD, cyclic_cosine_lr, ema_update, sgd_nesterov_step
from scoreag.diffcore.tensor import Tensor, gradients


@pytest.mark.unit
@pytest.mark.diffcore
class TestTensor:
    """Test suite for tensor construction and the reverse pass."""

    def test_tensor_rejects_non_finite(self):
        """Test that NaN or infinite values are rejected at construction."""
        with pytest.raises(NumericOverflowError):
            Tensor([1.0, np.nan])
        with pytest.raises(NumericOverflowError):
            Tensor([np.inf])

    def test_tensor_data_is_read_only(self):
        """Test that tensor values cannot be mutated in place."""
        # Arrange
        t = Tensor(np.zeros(3))

        # Act / Assert
        with pytest.raises(ValueError):
            t.data[0] = 1.0
        assert t.numpy().flags.writeable

    def test_gradients_of_quadratic(self):
        """Test that the gradient of sum(x^2) is 2x."""
        # Arrange
        x = Tensor([1.0, -2.0, 3.0], requires_grad=True)

        # Act
        (grad,) = gradients(ops.sum(ops.square(x)), [x])

        # Assert
        np.testing.assert_allclose(grad, [2.0, -4.0, 6.0])

    def test_shared_subexpression_accumulates(self):
        """Test that a tensor used twice receives the sum of both contributions."""
        # Arrange
        x = Tensor([2.0], requires_grad=True)

        # Act
        (grad,) = gradients(ops.sum(x * x + x), [x])

        # Assert
        np.testing.assert_allclose(grad, [5.0])

    def test_unused_input_gets_zero_gradient(self):
        """Test that inputs the output does not depend on get zeros."""
        # Arrange
        x = Tensor([1.0, 2.0], requires_grad=True)
        unused = Tensor(np.ones((2, 2)), requires_grad=True)

        # Act
        grads = gradients(ops.sum(x), [x, unused])

        # Assert
        np.testing.assert_array_equal(grads[1], np.zeros((2, 2)))

    def test_non_scalar_seed_rejected(self):
        """Test that backward needs a single-element seed."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            gradients(x * 2.0, [x])

    def test_stop_gradient_blocks_flow(self):
        """Test that stop_gradient passes values through but no gradient."""
        # Arrange
        x = Tensor([3.0], requires_grad=True)

        # Act
        out = ops.sum(ops.stop_gradient(x) * x)
        (grad,) = gradients(out, [x])

        # Assert
        assert out.item() == 9.0
        np.testing.assert_allclose(grad, [3.0])


@pytest.mark.unit
@pytest.mark.diffcore
class TestOps:
    """Test suite for the primitive operations."""

    def test_shape_mismatch_raises(self):
        """Test that incompatible operand shapes are rejected."""
        with pytest.raises(ShapeMismatchError):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_softmax_cross_entropy_value(self):
        """Test that cross-entropy of uniform logits is log K."""
        # Arrange
        logits = Tensor(np.zeros((2, 4)))

        # Act
        loss = ops.softmax_cross_entropy(logits, [0, 3])

        # Assert
        assert loss.item() == pytest.approx(np.log(4.0))

    def test_cross_entropy_target_out_of_range(self):
        """Test that a target index outside [0, K) is a contract violation."""
        with pytest.raises(ContractError):
            ops.softmax_cross_entropy(Tensor(np.zeros((1, 3))), [3])

    def test_log_softmax_rows_normalise(self):
        """Test that exponentiated log-softmax rows sum to one."""
        # Arrange
        logits = Tensor(np.array([[1.0, 2.0, 3.0], [0.0, -5.0, 5.0]]))

        # Act
        out = ops.log_softmax(logits)

        # Assert
        np.testing.assert_allclose(np.exp(out.data).sum(axis=1), [1.0, 1.0])

    def test_squared_error_row_reduction(self):
        """Test that the row reduction gives one sum per sample."""
        # Arrange
        a = Tensor(np.ones((2, 1, 2, 2)))
        b = Tensor(np.zeros((2, 1, 2, 2)))

        # Act
        out = ops.squared_error(a, b, reduction="row")

        # Assert
        np.testing.assert_array_equal(out.data, [4.0, 4.0])

    def test_squared_error_unknown_reduction(self):
        """Test that an unknown reduction name is rejected."""
        with pytest.raises(ContractError):
            ops.squared_error(Tensor([1.0]), Tensor([0.0]), reduction="max")

    def test_conv2d_gradient_matches_numeric(self):
        """Test that the convolution backward agrees with central differences."""
        # Arrange
        rng = np.random.default_rng(2)
        args = [rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(2, 2, 3, 3)) * 0.3, rng.normal(size=2)]

        # Act
        result = check_case("conv2d", lambda x, w, b: ops.sum(ops.tanh(ops.conv2d(x, w, b))), args)

        # Assert
        assert result.max_rel_error < 1e-4


@pytest.mark.unit
@pytest.mark.diffcore
class TestGraph:
    """Test suite for named-input graphs."""

    def test_forward_backward_named_inputs(self):
        """Test that backward returns a gradient per differentiable input."""
        # Arrange
        graph = Graph(lambda v: {"loss": ops.sum(v["w"] * v["x"])}, name="dot")
        w = Tensor([1.0, 2.0], requires_grad=True)

        # Act
        outputs = graph.forward({"w": w, "x": np.array([3.0, 4.0])})
        grads = graph.backward("loss")

        # Assert
        assert outputs["loss"].item() == 11.0
        assert set(grads) == {"w"}
        np.testing.assert_allclose(grads["w"].data, [3.0, 4.0])
        assert graph.nodes

    def test_backward_before_forward(self):
        """Test that backward without a trace raises a contract error."""
        graph = Graph(lambda v: {"y": v["x"]})
        with pytest.raises(ContractError):
            graph.backward("y")

    def test_backward_unknown_output(self):
        """Test that asking for an unknown output raises a contract error."""
        graph = Graph(lambda v: {"y": ops.sum(v["x"])})
        graph.forward({"x": Tensor([1.0], requires_grad=True)})
        with pytest.raises(ContractError):
            graph.backward("z")

    def test_value_and_grad(self):
        """Test that value_and_grad differentiates only the requested arguments."""
        # Act
        value, grads = value_and_grad(lambda a, b: ops.sum(a * b), [np.array([2.0]), np.array([5.0])], argnums=[1])

        # Assert
        assert value == 10.0
        assert len(grads) == 1
        np.testing.assert_allclose(grads[0], [2.0])


@pytest.mark.unit
@pytest.mark.diffcore
class TestOptim:
    """Test suite for the optimizer updates."""

    def test_nesterov_step_matches_formula(self):
        """Test one Nesterov step against the closed form."""
        # Arrange
        p, g = np.array([1.0]), np.array([0.5])
        lr, mu, wd = 0.1, 0.9, 0.01

        # Act
        (new_p,), (v,) = sgd_nesterov_step([p], [g], lr, mu, wd)

        # Assert
        g_eff = 0.5 + 0.01 * 1.0
        assert v[0] == pytest.approx(g_eff)
        assert new_p[0] == pytest.approx(1.0 - lr * (g_eff + mu * g_eff))

    def test_nesterov_step_is_functional(self):
        """Test that the step leaves its input arrays untouched."""
        # Arrange
        p = np.array([1.0, 2.0])

        # Act
        sgd_nesterov_step([p], [np.ones(2)], 0.1, 0.9, 0.0)

        # Assert
        np.testing.assert_array_equal(p, [1.0, 2.0])

    def test_stateful_optimizer_keeps_momentum(self):
        """Test that the wrapper carries velocities between steps."""
        # Arrange
        opt = NesterovSGD(momentum=0.5, weight_decay=0.0)

        # Act
        p1 = opt.step([np.zeros(1)], [np.ones(1)], lr=1.0)
        p2 = opt.step(p1, [np.ones(1)], lr=1.0)

        # Assert
        assert p1[0][0] == pytest.approx(-1.5)
        assert p2[0][0] == pytest.approx(-1.5 - (1.0 + 0.5 * 1.5))

    @pytest.mark.parametrize("kwargs", [{"lr": 0.0}, {"momentum": 1.0}, {"weight_decay": -1.0}])
    def test_invalid_hyperparameters(self, kwargs):
        """Test that out-of-range hyperparameters are contract violations."""
        params = {"lr": 0.1, "momentum": 0.9, "weight_decay": 0.0}
        params.update(kwargs)
        with pytest.raises(ContractError):
            sgd_nesterov_step([np.zeros(1)], [np.zeros(1)], **params)

    def test_ema_update(self):
        """Test the moving average update and its decay range."""
        # Act
        (shadow,) = ema_update([np.array([0.0])], [np.array([1.0])], 0.9)

        # Assert
        assert shadow[0] == pytest.approx(0.1)
        with pytest.raises(ContractError):
            ema_update([np.zeros(1)], [np.zeros(1)], 1.0)

    def test_cyclic_cosine_restarts(self):
        """Test that the cosine schedule starts at lr0 and restarts each cycle."""
        assert cyclic_cosine_lr(0, 10, 0.2) == pytest.approx(0.2)
        assert cyclic_cosine_lr(5, 10, 0.2) == pytest.approx(0.1)
        assert cyclic_cosine_lr(10, 10, 0.2) == pytest.approx(0.2)


@pytest.mark.unit
@pytest.mark.diffcore
class TestGradcheck:
    """Test suite for the gradient verification suite."""

    def test_suite_passes(self):
        """Test that every primitive and 100 random graphs pass the tolerance."""
        # Act
        report = run_suite(seed=0)

        # Assert
        n_primitives = len(primitive_cases(np.random.default_rng(0)))
        assert report.passed, report.to_dict()
        assert report.max_rel_error < 1e-4
        assert len(report.cases) == n_primitives + 100
        assert sum(c.name.startswith("random[") for c in report.cases) == 100
        assert report.to_dict()["n_cases"] == len(report.cases)

    def test_report_states_relative_error_floor(self):
        """Test that the report carries the denominator floor and the worst absolute error."""
        # Act
        summary = run_suite(seed=1, n_random=2).to_dict()

        # Assert
        assert summary["rel_error_floor"] == REL_ERROR_FLOOR == 1e-3
        assert np.isfinite(summary["max_abs_error"]) and summary["max_abs_error"] >= 0.0

    def test_relative_error_floor(self):
        """Test that tiny gradients are compared against the floor and large ones relatively."""
        # Act
        tiny = relative_error(np.array([1e-6]), np.array([2e-6]))
        large = relative_error(np.array([100.0]), np.array([101.0]))
        strict = relative_error(np.array([1e-6]), np.array([2e-6]), floor=1e-8)

        # Assert
        assert tiny[0] == pytest.approx(1e-6 / REL_ERROR_FLOOR)
        assert large[0] == pytest.approx(1.0 / 101.0)
        assert strict[0] == pytest.approx(0.5)

    def test_suite_flags_failures_under_zero_tolerance(self):
        """Test that a zero tolerance reports every case as failed."""
        report = run_suite(seed=0, n_random=1, tolerance=0.0)
        assert not report.passed
