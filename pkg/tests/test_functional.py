"""Tests for the neural-network primitives."""

import math
import unittest

import numpy as np

from wav2vec2_speaker.exceptions import ShapeError
from wav2vec2_speaker.nn import (
    Tensor,
    binary_cross_entropy_with_logits,
    conv1d,
    cross_entropy,
    dropout,
    gelu,
    gradient_check,
    group_norm,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax,
    multi_head_self_attention,
    softmax,
)

SEEDS = range(10)
TOLERANCE = 1e-4


def _attention_projections(rng, dim):
    names = [f"{p}_proj.{k}" for p in ("q", "k", "v", "out") for k in ("weight", "bias")]
    return {n: rng.standard_normal((dim, dim) if n.endswith("weight") else dim) * 0.5 for n in names}, names


class TestFunctionalValues(unittest.TestCase):
    """Forward values of the primitives."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(0)

    def test_conv1d_matches_direct_sum(self):
        """Test conv1d against an explicit cross-correlation."""
        x = self.rng.standard_normal((1, 2, 9))
        w = self.rng.standard_normal((3, 2, 3))
        out = conv1d(Tensor(x), Tensor(w), stride=2).data
        self.assertEqual(out.shape, (1, 3, 4))
        for o in range(3):
            for t in range(4):
                expected = np.sum(x[0, :, 2 * t : 2 * t + 3] * w[o])
                self.assertAlmostEqual(out[0, o, t], expected)

    def test_conv1d_groups_are_independent(self):
        """Test that a grouped convolution only mixes channels within a group."""
        x = self.rng.standard_normal((1, 4, 6))
        w = self.rng.standard_normal((4, 2, 3))
        base = conv1d(Tensor(x), Tensor(w), groups=2).data
        x2 = x.copy()
        x2[0, 2:] += 1.0
        changed = conv1d(Tensor(x2), Tensor(w), groups=2).data
        np.testing.assert_allclose(base[0, :2], changed[0, :2])

    def test_conv1d_rejects_short_input(self):
        """Test that an input shorter than the kernel is rejected."""
        with self.assertRaises(ShapeError):
            conv1d(Tensor(np.zeros((1, 1, 2))), Tensor(np.zeros((1, 1, 3))))

    def test_gelu_values(self):
        """Test exact GELU at a few points."""
        values = gelu(Tensor(np.array([-1.0, 0.0, 1.0]))).data
        phi = 0.5 * (1.0 + math.erf(1.0 / math.sqrt(2.0)))
        np.testing.assert_allclose(values, [-(1.0 - phi), 0.0, phi], rtol=1e-12)

    def test_layer_norm_statistics(self):
        """Test that layer norm gives zero mean and unit variance per row."""
        x = self.rng.standard_normal((4, 16)) * 5.0 + 3.0
        out = layer_norm(Tensor(x), None, None, eps=1e-12).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-8)

    def test_group_norm_per_channel(self):
        """Test that one group per channel normalizes each channel over time."""
        x = self.rng.standard_normal((2, 3, 10)) * 4.0
        out = group_norm(Tensor(x), 3, None, None, eps=1e-12).data
        np.testing.assert_allclose(out.mean(axis=2), 0.0, atol=1e-10)

    def test_group_norm_valid_steps(self):
        """Test that masked statistics ignore steps past each item's valid length."""
        x = self.rng.standard_normal((2, 4, 8))
        valid = np.arange(8)[None, :] < np.array([[8], [5]])
        out = group_norm(Tensor(x), 2, None, None, valid=valid).data
        np.testing.assert_allclose(out[0], group_norm(Tensor(x[:1]), 2, None, None).data[0], atol=1e-12)
        np.testing.assert_allclose(out[1, :, :5], group_norm(Tensor(x[1:, :, :5]), 2, None, None).data[0], atol=1e-12)
        with self.assertRaises(ShapeError):
            group_norm(Tensor(x), 2, None, None, valid=np.zeros((2, 8), dtype=bool))

    def test_conv1d_is_linear(self):
        """Test conv(a*x + b*y) == a*conv(x) + b*conv(y) without a bias."""
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x, y = rng.standard_normal((2, 2, 4, 11))
            w = Tensor(rng.standard_normal((6, 2, 3)))
            a, b = rng.standard_normal(2)

            def conv(v):
                return conv1d(Tensor(v), w, stride=2, padding=1, groups=2).data

            np.testing.assert_allclose(conv(a * x + b * y), a * conv(x) + b * conv(y), atol=1e-10)

    def test_norms_are_shift_invariant(self):
        """Test that adding a constant before layer and group norm changes nothing."""
        x = self.rng.standard_normal((3, 4, 6))
        gain, offset = Tensor(self.rng.standard_normal(6)), Tensor(self.rng.standard_normal(6))
        np.testing.assert_allclose(layer_norm(Tensor(x + 7.5), gain, offset).data,
                                   layer_norm(Tensor(x), gain, offset).data, atol=1e-9)
        gain, offset = Tensor(self.rng.standard_normal(4)), Tensor(self.rng.standard_normal(4))
        np.testing.assert_allclose(group_norm(Tensor(x - 3.25), 2, gain, offset).data,
                                   group_norm(Tensor(x), 2, gain, offset).data, atol=1e-9)

    def test_softmax_mask_zeroes_positions(self):
        """Test that masked positions get probability zero."""
        probs = softmax(Tensor(np.array([[1.0, 2.0, 3.0]])), mask=np.array([[True, False, True]])).data
        self.assertEqual(probs[0, 1], 0.0)
        self.assertAlmostEqual(probs.sum(), 1.0)

    def test_cross_entropy_matches_manual(self):
        """Test cross-entropy against -log softmax at the targets."""
        logits = self.rng.standard_normal((5, 4))
        targets = np.array([0, 3, 1, 1, 2])
        expected = -np.mean(np.log(np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True))[np.arange(5), targets])
        self.assertAlmostEqual(cross_entropy(Tensor(logits), targets).item(), expected, places=12)

    def test_cross_entropy_rejects_bad_target(self):
        """Test that out-of-range targets are rejected."""
        with self.assertRaises(ValueError):
            cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))

    def test_bce_is_stable_for_large_logits(self):
        """Test BCE at extreme logits stays finite and correct."""
        loss = binary_cross_entropy_with_logits(Tensor(np.array([1000.0, -1000.0])), np.array([0.0, 1.0]))
        self.assertAlmostEqual(loss.item(), 1000.0)

    def test_bce_at_zero_logit_is_ln2(self):
        """Test that a zero logit costs ln 2 for either label."""
        loss = binary_cross_entropy_with_logits(Tensor(np.zeros(4)), np.array([1, 0, 1, 0]))
        self.assertAlmostEqual(loss.item(), math.log(2.0))

    def test_dropout_modes(self):
        """Test that dropout is identity in eval mode and rescales in train mode."""
        x = Tensor(np.ones((200, 50)))
        self.assertIs(dropout(x, 0.5, "eval", None), x)
        out = dropout(x, 0.5, "train", np.random.default_rng(1)).data
        self.assertTrue(set(np.unique(out)) <= {0.0, 2.0})
        self.assertAlmostEqual(out.mean(), 1.0, delta=0.05)
        with self.assertRaises(ValueError):
            dropout(x, 0.5, "training", None)

    def test_attention_ignores_masked_keys(self):
        """Test that padded key frames do not influence valid outputs."""
        dim, time = 4, 5
        projections, _ = _attention_projections(self.rng, dim)
        params = {k: Tensor(v) for k, v in projections.items()}
        x = self.rng.standard_normal((1, time, dim))
        mask = np.array([[True, True, True, False, False]])
        base = multi_head_self_attention(Tensor(x), 2, params, mask).data
        x2 = x.copy()
        x2[0, 3:] = 100.0
        changed = multi_head_self_attention(Tensor(x2), 2, params, mask).data
        np.testing.assert_allclose(base[0, :3], changed[0, :3], atol=1e-10)

    def test_l2_normalize_unit_norm(self):
        """Test that normalized rows have unit length."""
        out = l2_normalize(Tensor(self.rng.standard_normal((3, 7)))).data
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0)


class TestFunctionalGradients(unittest.TestCase):
    """Finite-difference checks of every primitive at double precision."""

    def _check(self, op, shapes, seed, low=None):
        rng = np.random.default_rng(seed)
        inputs = [rng.uniform(low, 2.0, s) if low is not None else rng.standard_normal(s) for s in shapes]
        self.assertLess(gradient_check(op, inputs, seed=seed), TOLERANCE)

    def test_conv1d(self):
        """Test strided, padded and grouped convolution gradients."""
        for seed in SEEDS:
            self._check(lambda x, w, b: conv1d(x, w, b, stride=2, padding=1, groups=2), [(2, 4, 9), (6, 2, 3), (6,)], seed)

    def test_gelu(self):
        """Test GELU gradients."""
        for seed in SEEDS:
            self._check(gelu, [(3, 5)], seed)

    def test_linear(self):
        """Test linear gradients."""
        for seed in SEEDS:
            self._check(linear, [(2, 3, 4), (5, 4), (5,)], seed)

    def test_layer_norm(self):
        """Test layer norm gradients including gain and offset."""
        for seed in SEEDS:
            self._check(lambda x, g, b: layer_norm(x, g, b), [(3, 6), (6,), (6,)], seed)

    def test_group_norm(self):
        """Test group norm gradients."""
        for seed in SEEDS:
            self._check(lambda x, g, b: group_norm(x, 2, g, b), [(2, 4, 5), (4,), (4,)], seed)
            valid = np.arange(5)[None, :] < np.array([[5], [3]])
            self._check(lambda x, g, b: group_norm(x, 2, g, b, valid=valid), [(2, 4, 5), (4,), (4,)], seed)

    def test_softmax_and_log_softmax(self):
        """Test masked softmax and log-softmax gradients."""
        mask = np.array([[True, True, False, True]] * 3)
        for seed in SEEDS:
            self._check(lambda x: softmax(x, mask=mask), [(3, 4)], seed)
            self._check(lambda x: log_softmax(x), [(3, 4)], seed)

    def test_losses(self):
        """Test cross-entropy and BCE gradients."""
        targets = np.array([2, 0, 1])
        labels = np.array([1.0, 0.0, 1.0])
        for seed in SEEDS:
            self._check(lambda x: cross_entropy(x, targets), [(3, 4)], seed)
            self._check(lambda x: binary_cross_entropy_with_logits(x, labels), [(3,)], seed)

    def test_l2_normalize(self):
        """Test normalization gradients away from zero."""
        for seed in SEEDS:
            self._check(l2_normalize, [(3, 4)], seed, low=0.5)

    def test_attention(self):
        """Test multi-head attention gradients w.r.t. input and projections."""
        dim = 4
        mask = np.array([[True, True, True, False], [True, True, True, True]])
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            projections, names = _attention_projections(rng, dim)
            x = rng.standard_normal((2, 4, dim))

            def op(x, *params):
                return multi_head_self_attention(x, 2, dict(zip(names, params)), mask)

            self.assertLess(gradient_check(op, [x] + [projections[n] for n in names], seed=seed), TOLERANCE)


if __name__ == "__main__":
    unittest.main()
