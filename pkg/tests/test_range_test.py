"""Tests for the learning-rate range test."""

import unittest

import numpy as np

from wav2vec2_speaker.nn import ParameterStore
from wav2vec2_speaker.training import RangeTestConfig, lr_grid, lr_range_test, smooth_losses


class QuadraticModel:
    """loss = (w - 3)^2, which a growing learning rate first reduces then overshoots."""

    def __init__(self):
        self.store = ParameterStore()
        self.store.add("w", np.zeros(1))

    def loss(self, batch, rng):
        diff = self.store["w"] - 3.0
        return (diff * diff).sum()


class RisingModel(QuadraticModel):
    """A loss that grows by one on every call whatever the parameters do."""

    def __init__(self):
        super().__init__()
        self.calls = 0

    def loss(self, batch, rng):
        self.calls += 1
        return (self.store["w"] * 0.0).sum() + float(self.calls)


class TestRangeTest(unittest.TestCase):
    """Test cases for lr_range_test and its helpers."""

    def test_smooth_constant(self):
        """Test that bias correction keeps a constant series constant."""
        np.testing.assert_allclose(smooth_losses(np.full(10, 4.0), 0.98), np.full(10, 4.0))

    def test_lr_grid(self):
        """Test the grid spans the descending stretch around the steepest point."""
        lrs = np.logspace(-6, 0, 7)
        slopes = np.array([1.0, -1.0, -2.0, -3.0, -2.0, -1.0, 1.0])
        steepest, grid, bounds = lr_grid(lrs, slopes)
        self.assertAlmostEqual(steepest, 1e-3)
        self.assertEqual(len(grid), 7)
        self.assertAlmostEqual(grid[0], 1e-5, delta=1e-12)
        self.assertAlmostEqual(grid[3], 1e-3)
        self.assertAlmostEqual(grid[-1], 1e-1, delta=1e-9)
        self.assertEqual(bounds, (lrs[1], lrs[5]))

    def test_lr_grid_without_descent(self):
        """Test that a never-decreasing curve suggests nothing."""
        self.assertEqual(lr_grid(np.logspace(-6, 0, 5), np.zeros(5)), (None, [], None))

    def test_sweep_finds_descent(self):
        """Test a sweep over a quadratic suggests a rate inside the range."""
        config = RangeTestConfig(steps=200, lr_min=1e-5, lr_max=10.0, smoothing=0.9)
        result = lr_range_test(QuadraticModel, lambda rng: None, config)
        self.assertFalse(result.no_descent)
        self.assertEqual(len(result.curve), 200)
        self.assertEqual(list(result.curve.columns), ["step", "lr", "raw_loss", "smoothed_loss"])
        # an Adam step moves w by about lr, and the optimum is 3.0 away
        self.assertLess(result.suggested_lr, 3.0)
        low, high = result.descent_bounds
        self.assertTrue(1e-5 <= low <= result.suggested_lr <= high <= 10.0)
        self.assertEqual(len(result.grid), 7)
        self.assertEqual(result.grid, sorted(result.grid))

    def test_rising_loss_reports_no_descent(self):
        """Test that a loss that only rises gives no suggestion."""
        config = RangeTestConfig(steps=50, lr_min=1e-5, lr_max=1.0)
        result = lr_range_test(RisingModel, lambda rng: None, config)
        self.assertTrue(result.no_descent)
        self.assertEqual(result.grid, [])

    def test_invalid_config(self):
        """Test that lr_min must be below lr_max."""
        with self.assertRaises(ValueError):
            lr_range_test(QuadraticModel, lambda rng: None, RangeTestConfig(lr_min=1.0, lr_max=0.1))


if __name__ == "__main__":
    unittest.main()
