"""Tests for the reverse-mode Tensor."""

import unittest

import numpy as np

from wav2vec2_speaker.exceptions import ShapeError
from wav2vec2_speaker.nn import Tensor, concatenate, gradient_check, is_grad_enabled, no_grad, stack, where


class TestTensor(unittest.TestCase):
    """Test cases for Tensor arithmetic and backpropagation."""

    def setUp(self):
        """Set up test fixtures."""
        rng = np.random.default_rng(0)
        self.a = rng.standard_normal((3, 4))
        self.b = rng.standard_normal((3, 4))

    def test_add_and_mul_gradients(self):
        """Test gradients of a product plus a sum."""
        x = Tensor(self.a, requires_grad=True)
        y = Tensor(self.b, requires_grad=True)
        (x * y + x).sum().backward()
        np.testing.assert_allclose(x.grad, self.b + 1.0)
        np.testing.assert_allclose(y.grad, self.a)

    def test_broadcast_gradient_is_reduced(self):
        """Test that a broadcast operand receives a gradient of its own shape."""
        x = Tensor(self.a, requires_grad=True)
        row = Tensor(np.ones((1, 4)), requires_grad=True)
        (x * row).sum().backward()
        self.assertEqual(row.grad.shape, (1, 4))
        np.testing.assert_allclose(row.grad, self.a.sum(axis=0, keepdims=True))

    def test_gradient_accumulates_over_reuse(self):
        """Test that a tensor used twice accumulates both contributions."""
        x = Tensor(np.array(3.0), requires_grad=True)
        (x * x + x).backward()
        self.assertAlmostEqual(float(x.grad), 7.0)

    def test_backward_needs_scalar(self):
        """Test that backward without a gradient rejects non-scalars."""
        x = Tensor(self.a, requires_grad=True)
        with self.assertRaises(ShapeError):
            (x * 2.0).backward()

    def test_no_grad_records_nothing(self):
        """Test that operations under no_grad produce untracked tensors."""
        x = Tensor(self.a, requires_grad=True)
        with no_grad():
            self.assertFalse(is_grad_enabled())
            y = x * 2.0
        self.assertTrue(is_grad_enabled())
        self.assertFalse(y.requires_grad)

    def test_detach_cuts_tape(self):
        """Test that detached tensors carry no gradient history."""
        x = Tensor(self.a, requires_grad=True)
        d = (x * 3.0).detach()
        self.assertFalse(d.requires_grad)
        np.testing.assert_allclose(d.data, self.a * 3.0)

    def test_integer_data_becomes_float(self):
        """Test that integer arrays are promoted to floating point."""
        self.assertTrue(np.issubdtype(Tensor(np.arange(3)).dtype, np.floating))

    def test_max_routes_gradient_to_argmax(self):
        """Test that max sends the gradient to the winning element only."""
        x = Tensor(np.array([[1.0, 5.0, 2.0]]), requires_grad=True)
        x.max(axis=1).sum().backward()
        np.testing.assert_allclose(x.grad, [[0.0, 1.0, 0.0]])

    def test_getitem_scatter(self):
        """Test that fancy indexing scatters gradients back, summing repeats."""
        x = Tensor(np.arange(4.0), requires_grad=True)
        x[np.array([0, 0, 3])].sum().backward()
        np.testing.assert_allclose(x.grad, [2.0, 0.0, 0.0, 1.0])

    def test_where_lifts_scalars_to_tensor_dtype(self):
        """Test that where keeps the dtype of its tensor branch."""
        x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        out = where(np.array([True, False, True]), x, 0.0)
        self.assertEqual(out.dtype, np.float32)
        out.sum().backward()
        np.testing.assert_allclose(x.grad, [1.0, 0.0, 1.0])

    def test_concatenate_and_stack_shapes(self):
        """Test concatenate and stack output shapes and gradient splitting."""
        x = Tensor(self.a, requires_grad=True)
        y = Tensor(self.b, requires_grad=True)
        self.assertEqual(concatenate([x, y], axis=1).shape, (3, 8))
        stacked = stack([x, y], axis=0)
        self.assertEqual(stacked.shape, (2, 3, 4))
        (stacked * 2.0).sum().backward()
        np.testing.assert_allclose(y.grad, np.full((3, 4), 2.0))


class TestTensorGradients(unittest.TestCase):
    """Finite-difference checks of the Tensor operations."""

    def test_elementwise_ops(self):
        """Test division, power, exp, log and sqrt against finite differences."""
        for seed in range(10):
            rng = np.random.default_rng(seed)
            a = rng.uniform(0.5, 2.0, (2, 3))
            b = rng.uniform(0.5, 2.0, (2, 3))
            error = gradient_check(lambda x, y: (x / y) ** 2 + x.exp() * y.log() + (x * y).sqrt(), [a, b], seed=seed)
            self.assertLess(error, 1e-4)

    def test_matmul_reshape_transpose(self):
        """Test matmul, reshape, transpose and mean against finite differences."""
        for seed in range(10):
            rng = np.random.default_rng(seed)
            a = rng.standard_normal((2, 3, 4))
            b = rng.standard_normal((4, 5))
            op = lambda x, y: (x @ y).transpose(0, 2, 1).reshape(2, 15).mean(axis=1)
            self.assertLess(gradient_check(op, [a, b], seed=seed), 1e-4)


if __name__ == "__main__":
    unittest.main()
