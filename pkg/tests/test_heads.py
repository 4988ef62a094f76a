"""Tests for the ce, aam and pair heads."""

import math
import unittest

import numpy as np

from wav2vec2_speaker.data import WaveBatch
from wav2vec2_speaker.exceptions import ShapeError
from wav2vec2_speaker.model import (
    ClassifierHead,
    EncoderConfig,
    FrameSequence,
    PairHead,
    SpeakerModel,
    Wav2Vec2Encoder,
    aam_forward,
    aam_logits,
    bce_loss,
    ce_forward,
)
from wav2vec2_speaker.nn import ParameterStore, Tensor, cross_entropy, gradient_check, parameter_gradient_check
from wav2vec2_speaker.training import ClassificationBatch, PairBatch

SEEDS = range(10)
TOLERANCE = 1e-4


def checkable():
    """Dim-16, 2-layer float64 encoder with every stochastic part off."""
    return EncoderConfig.tiny(
        conv_channels=8, model_dim=16, ffn_dim=32, layers=2, heads=2, pos_conv_kernel=4, pos_conv_groups=2,
        dropout_p=0.0, layerdrop_p=0.0, time_mask_p=0.0, channel_mask_p=0.0, freeze_feature_extractor=False,
        dtype="float64",
    )


class TestAam(unittest.TestCase):
    """Test cases for additive angular margin logits."""

    def setUp(self):
        """Set up test fixtures."""
        rng = np.random.default_rng(0)
        self.embeddings = rng.standard_normal((4, 6))
        self.weight = rng.standard_normal((3, 6))
        self.targets = np.array([0, 2, 1, 2])

    def _cosine(self):
        e = self.embeddings / np.linalg.norm(self.embeddings, axis=1, keepdims=True)
        w = self.weight / np.linalg.norm(self.weight, axis=1, keepdims=True)
        return e @ w.T

    def test_zero_margin_is_scaled_cosine(self):
        """Test that margin 0 leaves s * cos on every class."""
        logits = aam_logits(Tensor(self.embeddings), Tensor(self.weight), self.targets, 30.0, 0.0)
        np.testing.assert_allclose(logits.data, 30.0 * self._cosine(), atol=1e-10)

    def test_margin_only_touches_targets(self):
        """Test that non-target logits stay s * cos."""
        logits = aam_logits(Tensor(self.embeddings), Tensor(self.weight), self.targets, 30.0, 0.2).data
        expected = 30.0 * self._cosine()
        mask = np.ones_like(expected, dtype=bool)
        mask[np.arange(4), self.targets] = False
        np.testing.assert_allclose(logits[mask], expected[mask], atol=1e-10)
        theta = np.arccos(self._cosine()[np.arange(4), self.targets])
        np.testing.assert_allclose(logits[np.arange(4), self.targets], 30.0 * np.cos(theta + 0.2), atol=1e-8)

    def test_aligned_embedding(self):
        """Test the target logit when the embedding matches its class weight."""
        logits = aam_logits(Tensor(self.weight[:1] * 3.0), Tensor(self.weight), np.array([0]), 30.0, 0.2)
        self.assertAlmostEqual(logits.data[0, 0], 30.0 * math.cos(0.2), places=6)

    def test_opposite_embedding_uses_fallback(self):
        """Test the fallback past theta + m = pi."""
        logits = aam_logits(Tensor(-self.weight[:1]), Tensor(self.weight), np.array([0]), 30.0, 0.2)
        self.assertAlmostEqual(logits.data[0, 0], 30.0 * (-1.0 - 0.2 * math.sin(0.2)), places=6)

    def test_zero_norm_rejected(self):
        """Test that a zero embedding cannot be normalized."""
        with self.assertRaises(ValueError):
            aam_logits(Tensor(np.zeros((1, 6))), Tensor(self.weight), np.array([0]), 30.0, 0.2)

    def test_loss_gradients(self):
        """Test AAM loss gradients for embeddings and weights."""
        for seed in range(10):
            rng = np.random.default_rng(seed)
            e, w = rng.standard_normal((4, 5)), rng.standard_normal((3, 5))
            error = gradient_check(lambda a, b: aam_forward(a, b, self.targets, 30.0, 0.2)[1], [e, w], seed=seed)
            self.assertLess(error, 1e-4)


class TestCeAndBce(unittest.TestCase):
    """Test cases for the affine CE head and pair BCE."""

    def test_ce_forward(self):
        """Test that CE logits are affine and the loss is cross-entropy."""
        rng = np.random.default_rng(1)
        e, w, b = rng.standard_normal((3, 4)), rng.standard_normal((5, 4)), rng.standard_normal(5)
        targets = np.array([4, 0, 2])
        logits, loss = ce_forward(Tensor(e), Tensor(w), Tensor(b), targets)
        np.testing.assert_allclose(logits.data, e @ w.T + b)
        self.assertAlmostEqual(loss.item(), cross_entropy(Tensor(e @ w.T + b), targets).item())

    def test_bce_loss_labels(self):
        """Test BCE with boolean labels."""
        loss = bce_loss(Tensor(np.array([100.0, -100.0])), [True, False])
        self.assertAlmostEqual(loss.item(), 0.0, places=10)

    def test_classifier_head_layout(self):
        """Test head parameters per variant and argument checks."""
        store = ParameterStore()
        ClassifierHead(store, "ce", 4, 8)
        self.assertEqual(store["head.weight"].shape, (4, 8))
        self.assertIn("head.bias", store)
        with self.assertRaises(ValueError):
            ClassifierHead(ParameterStore(), "aam", 1, 8)
        with self.assertRaises(ValueError):
            ClassifierHead(ParameterStore(), "bce", 4, 8)
        head = ClassifierHead(ParameterStore(), "aam", 4, 8)
        with self.assertRaises(ShapeError):
            head.forward(Tensor(np.ones((2, 7))), np.array([0, 1]))


class TestPairHead(unittest.TestCase):
    """Test cases for joint pair scoring."""

    def setUp(self):
        """Set up test fixtures."""
        self.head = PairHead(ParameterStore(), model_dim=3)
        self.a = FrameSequence(Tensor(np.full((2, 3, 3), 5.0)), np.array([2, 3]))
        self.b = FrameSequence(Tensor(np.full((2, 2, 3), 7.0)), np.array([2, 1]))

    def test_join_layout(self):
        """Test start, separator and end frames around both utterances."""
        joined = self.head.join(self.a, self.b)
        np.testing.assert_array_equal(joined.valid_lengths, [7, 7])
        first = joined.data.data[0, :, 0]
        np.testing.assert_array_equal(first, [1.0, 5.0, 5.0, -1.0, 7.0, 7.0, -1.0])
        second = joined.data.data[1, :, 0]
        np.testing.assert_array_equal(second, [1.0, 5.0, 5.0, 5.0, -1.0, 7.0, -1.0])

    def test_join_pads_to_longest(self):
        """Test zero padding when joined lengths differ."""
        b = FrameSequence(Tensor(np.full((2, 2, 3), 7.0)), np.array([2, 2]))
        joined = self.head.join(self.a, b)
        np.testing.assert_array_equal(joined.valid_lengths, [7, 8])
        np.testing.assert_array_equal(joined.data.data[0, 7], np.zeros(3))

    def test_forward_reads_first_frame(self):
        """Test that the logit is an affine map of the first output frame."""
        store = self.head.store
        store["pair_head.weight"].data[:] = [1.0, 2.0, 3.0]
        store["pair_head.bias"].data[...] = 0.5
        logits, scores = self.head.forward(self.a, self.b, lambda seq: seq)
        np.testing.assert_allclose(logits.data, [6.5, 6.5])
        np.testing.assert_allclose(scores.data, logits.data)

    def test_mismatched_batches(self):
        """Test that pair batches must align."""
        with self.assertRaises(ShapeError):
            self.head.join(self.a, FrameSequence(Tensor(np.ones((1, 2, 3))), np.array([2])))

    def test_zero_layer_stack_reads_start_token(self):
        """Test that without transformer layers the logit is sum(w) + b for any pair."""
        encoder = Wav2Vec2Encoder(EncoderConfig.tiny(layers=0, dtype="float64"))
        head = PairHead(encoder.store, model_dim=48, seed=3)
        rng = np.random.default_rng(4)
        a = FrameSequence(Tensor(rng.standard_normal((3, 5, 48))), np.array([5, 2, 4]))
        b = FrameSequence(Tensor(rng.standard_normal((3, 4, 48)) * 10.0), np.array([1, 4, 3]))
        logits, _ = head.forward(a, b, encoder.transformer_stack)
        expected = encoder.store["pair_head.weight"].data.sum() + float(encoder.store["pair_head.bias"].data)
        np.testing.assert_allclose(logits.data, np.full(3, expected), atol=1e-12)


class TestHeadGradients(unittest.TestCase):
    """Finite-difference checks of whole-model losses per variant."""

    def _check(self, model, batch, step=1e-4):
        def loss():
            return model.loss(batch, np.random.default_rng(0))

        return parameter_gradient_check(loss, dict(model.store.items()), step=step, max_coordinates=2)

    def test_classification_heads(self):
        """Test ce and aam losses against every parameter of the model."""
        for variant in ("ce", "aam"):
            for seed in SEEDS:
                rng = np.random.default_rng(seed)
                model = SpeakerModel(checkable(), variant, "mean", num_classes=3, seed=seed)
                waves = WaveBatch(rng.standard_normal((3, 1040)), np.array([1040, 1040, 720]))
                batch = ClassificationBatch(waves, np.array([0, 2, 1]))
                with self.subTest(variant=variant, seed=seed):
                    self.assertLess(self._check(model, batch), TOLERANCE)

    def test_pair_head(self):
        """Test the joined-sequence bce loss against every parameter of the model."""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            model = SpeakerModel(checkable(), "bce", "mean", seed=seed)
            waves = WaveBatch(rng.standard_normal((4, 1040)), np.array([1040] * 4))
            batch = PairBatch(waves, np.array([[0, 1], [2, 3], [0, 2], [1, 3]]), np.array([True, True, False, False]))
            # attention biases need a small step to keep truncation error under the tolerance
            with self.subTest(seed=seed):
                self.assertLess(self._check(model, batch, step=1e-6), TOLERANCE)


if __name__ == "__main__":
    unittest.main()
