"""Tests for the wav2vec2 encoder and SpeakerModel."""

import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from wav2vec2_speaker.data import WaveBatch, Waveform
from wav2vec2_speaker.exceptions import ConfigError, ShapeError
from wav2vec2_speaker.model import (
    EncoderConfig,
    FrameSequence,
    SpeakerModel,
    Wav2Vec2Encoder,
    insert_cls_token,
    mask_spans,
    model_fingerprint,
    output_length,
)
from wav2vec2_speaker.nn import Tensor, parameter_gradient_check
from wav2vec2_speaker.training import ClassificationBatch

SEEDS = range(10)
TOLERANCE = 1e-4


def tiny(**overrides):
    overrides.setdefault("dtype", "float64")
    return EncoderConfig.tiny(**overrides)


def checkable(**overrides):
    """Dim-16, 2-layer encoder with every stochastic part off."""
    values = dict(
        conv_channels=8, model_dim=16, ffn_dim=32, layers=2, heads=2, pos_conv_kernel=4, pos_conv_groups=2,
        dropout_p=0.0, layerdrop_p=0.0, time_mask_p=0.0, channel_mask_p=0.0, freeze_feature_extractor=False,
    )
    values.update(overrides)
    return tiny(**values)


def projected(tensor, weights):
    return (tensor * weights).sum()


class TestOutputLength(unittest.TestCase):
    """Test cases for the feature-extractor length arithmetic."""

    def test_three_seconds(self):
        """Test the frame count of a 3 s crop."""
        self.assertEqual(output_length(48000, EncoderConfig()), 149)
        self.assertEqual(output_length(1600, EncoderConfig()), 4)

    def test_receptive_field_and_hop(self):
        """Test the derived receptive field and hop."""
        cfg = EncoderConfig()
        self.assertEqual(cfg.receptive_field, 400)
        self.assertEqual(cfg.hop, 320)
        self.assertEqual(output_length(400, cfg), 1)

    def test_too_short(self):
        """Test that inputs shorter than the receptive field are rejected."""
        with self.assertRaises(ShapeError):
            output_length(399, EncoderConfig())

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=400, max_value=2_000_000))
    def test_closed_form(self, samples):
        """Test the per-layer recurrence against floor((L - field) / hop) + 1."""
        cfg = EncoderConfig()
        self.assertEqual(output_length(samples, cfg), (samples - 400) // 320 + 1)


class TestEncoder(unittest.TestCase):
    """Test cases for Wav2Vec2Encoder."""

    def setUp(self):
        """Set up test fixtures."""
        self.rng = np.random.default_rng(0)
        self.audio = self.rng.standard_normal((2, 1600))

    def test_encode_shape(self):
        """Test eval-mode output shape and valid lengths."""
        seq = Wav2Vec2Encoder(tiny()).encode(self.audio)
        self.assertEqual(seq.data.shape, (2, 4, 48))
        np.testing.assert_array_equal(seq.valid_lengths, [4, 4])
        self.assertFalse(seq.cls_inserted)

    def test_cls_token_adds_frame(self):
        """Test that the cls token lengthens the sequence by one."""
        seq = Wav2Vec2Encoder(tiny(cls_token=True)).encode(self.audio)
        self.assertEqual(seq.data.shape, (2, 5, 48))
        self.assertTrue(seq.cls_inserted)

    def test_eval_is_deterministic(self):
        """Test that eval mode ignores dropout, masking and LayerDrop."""
        encoder = Wav2Vec2Encoder(tiny(dropout_p=0.5, layerdrop_p=0.5, time_mask_p=0.5))
        a = encoder.encode(self.audio).data.data
        b = encoder.encode(self.audio).data.data
        np.testing.assert_array_equal(a, b)

    def test_train_mode_needs_rng(self):
        """Test that train mode without a generator is refused."""
        with self.assertRaises(ValueError):
            Wav2Vec2Encoder(tiny()).encode(self.audio, "train")

    def test_train_mode_is_seeded(self):
        """Test that equal seeds give equal train-mode outputs."""
        encoder = Wav2Vec2Encoder(tiny(time_mask_p=0.3, time_mask_span=1))
        a = encoder.encode(self.audio, "train", np.random.default_rng(4)).data.data
        b = encoder.encode(self.audio, "train", np.random.default_rng(4)).data.data
        np.testing.assert_array_equal(a, b)

    def test_frozen_extractor_gets_no_gradient(self):
        """Test that the frozen extractor is excluded from backpropagation."""
        encoder = Wav2Vec2Encoder(tiny())
        encoder.encode(self.audio, "train", self.rng).data.sum().backward()
        self.assertIsNone(encoder.store["feature_extractor.conv_layers.0.conv.weight"].grad)
        self.assertIsNotNone(encoder.store["feature_projection.projection.weight"].grad)

    def test_unfrozen_extractor_gets_gradient(self):
        """Test that an unfrozen extractor receives gradients."""
        encoder = Wav2Vec2Encoder(tiny(freeze_feature_extractor=False))
        encoder.encode(self.audio, "train", self.rng).data.sum().backward()
        self.assertIsNotNone(encoder.store["feature_extractor.conv_layers.0.conv.weight"].grad)

    def test_checkpoint_names(self):
        """Test the wav2vec2 parameter naming."""
        names = set(Wav2Vec2Encoder(tiny()).parameter_names())
        for name in ("feature_extractor.conv_layers.0.layer_norm.weight",
                     "encoder.pos_conv_embed.conv.weight",
                     "encoder.layers.1.attention.q_proj.bias",
                     "encoder.layers.0.final_layer_norm.weight"):
            self.assertIn(name, names)
        self.assertNotIn("feature_extractor.conv_layers.1.layer_norm.weight", names)

    def test_invalid_config(self):
        """Test that every config problem is reported."""
        with self.assertRaises(ConfigError) as ctx:
            Wav2Vec2Encoder(tiny(model_dim=50, dropout_p=1.5))
        self.assertGreaterEqual(len(ctx.exception.problems), 2)

    def test_mask_spans(self):
        """Test that spans are zeroed and recorded."""
        seq = FrameSequence(Tensor(np.ones((1, 6, 4))), np.array([6]))
        masked = mask_spans(seq, [[(1, 2)]], [[(3, 1)]])
        data = masked.data.data
        self.assertEqual(float(data[0, 1:3].sum()), 0.0)
        self.assertEqual(float(data[0, :, 3].sum()), 0.0)
        self.assertEqual(float(data[0, 0, :3].sum()), 3.0)
        np.testing.assert_array_equal(masked.mask_metadata.masked_frames(0), [1, 2])

    def test_insert_cls_token(self):
        """Test that the cls frame is all ones and inserted once."""
        seq = insert_cls_token(FrameSequence(Tensor(np.zeros((2, 3, 4))), np.array([3, 2])))
        np.testing.assert_array_equal(seq.data.data[:, 0], np.ones((2, 4)))
        np.testing.assert_array_equal(seq.valid_lengths, [4, 3])
        with self.assertRaises(ValueError):
            insert_cls_token(seq)


class TestEncoderGradients(unittest.TestCase):
    """Finite-difference checks of the encoder stages at double precision."""

    def _parameters(self, encoder, prefixes, extra):
        params = {n: t for n, t in encoder.store.items() if n.startswith(prefixes)}
        params.update(extra)
        return params

    def test_project(self):
        """Test projection gradients w.r.t. latent frames and parameters."""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            encoder = Wav2Vec2Encoder(checkable(), seed=seed)
            latent = Tensor(rng.standard_normal((2, 8, 5)), requires_grad=True)
            weights = rng.standard_normal((2, 5, 16))

            def loss():
                return projected(encoder.project(latent, np.array([5, 4])).data, weights)

            params = self._parameters(encoder, ("feature_projection.",), {"latent": latent})
            self.assertLess(parameter_gradient_check(loss, params, seed=seed), TOLERANCE)

    def test_positional_block(self):
        """Test positional conv, residual sum and layer norm gradients."""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            encoder = Wav2Vec2Encoder(checkable(), seed=seed)
            frames = Tensor(rng.standard_normal((2, 6, 16)), requires_grad=True)
            weights = rng.standard_normal((2, 6, 16))

            def loss():
                return projected(encoder.add_positional(FrameSequence(frames, np.array([6, 4]))).data, weights)

            params = self._parameters(encoder, ("encoder.pos_conv_embed.", "encoder.layer_norm."), {"frames": frames})
            self.assertLess(parameter_gradient_check(loss, params, seed=seed), TOLERANCE)

    def test_transformer_stack(self):
        """Test two-layer transformer gradients with a padded item."""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            encoder = Wav2Vec2Encoder(checkable(), seed=seed)
            frames = Tensor(rng.standard_normal((2, 5, 16)), requires_grad=True)
            weights = rng.standard_normal((2, 5, 16))

            def loss():
                return projected(encoder.transformer_stack(FrameSequence(frames, np.array([5, 3]))).data, weights)

            params = self._parameters(encoder, ("encoder.layers.",), {"frames": frames})
            self.assertLess(parameter_gradient_check(loss, params, max_coordinates=5, seed=seed), TOLERANCE)

    def test_full_encoder(self):
        """Test end-to-end encoder gradients, extractor included."""
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            encoder = Wav2Vec2Encoder(checkable(), seed=seed)
            audio = rng.standard_normal((2, 1040))
            audio[1, 720:] = 0.0
            weights = rng.standard_normal((2, 3, 16))

            def loss():
                return projected(encoder.encode(audio, valid_samples=[1040, 720]).data, weights)

            params = dict(encoder.store.items())
            self.assertLess(parameter_gradient_check(loss, params, max_coordinates=2, seed=seed), TOLERANCE)


class TestEncoderInvariants(unittest.TestCase):
    """Structural properties of the encoder stages."""

    def test_time_mask_fraction(self):
        """Test the masked-frame fraction against the span sampling rule."""
        p, span, frames, items = 0.05, 10, 149, 10000
        encoder = Wav2Vec2Encoder(tiny(time_mask_p=p, time_mask_span=span, channel_mask_p=0.0))
        seq = FrameSequence(Tensor(np.ones((items, frames, 1))), np.full(items, frames))
        masked = encoder.apply_masks(seq, "train", np.random.default_rng(0))
        observed = np.mean([len(masked.mask_metadata.masked_frames(i)) for i in range(items)]) / frames
        # frame t is masked when any of the min(t + 1, span) positions before it starts a span
        starts = np.minimum(np.arange(frames) + 1, span)
        expected = float(np.mean(1.0 - (1.0 - p) ** starts))
        self.assertLess(abs(observed - expected) / expected, 0.05)
        blanked = np.all(masked.data.data == 0.0, axis=2).sum() / (items * frames)
        self.assertAlmostEqual(blanked, observed)

    def test_positional_receptive_field(self):
        """Test that one perturbed frame changes exactly kernel-many output frames."""
        encoder = Wav2Vec2Encoder(tiny(model_dim=8, heads=2, pos_conv_kernel=128, pos_conv_groups=4))
        x = np.random.default_rng(1).standard_normal((1, 384, 8))
        bumped = x.copy()
        bumped[0, 192] += 1.0
        lengths = np.array([384])
        base = encoder.add_positional(FrameSequence(Tensor(x), lengths)).data.data
        moved = encoder.add_positional(FrameSequence(Tensor(bumped), lengths)).data.data
        changed = np.flatnonzero(np.abs(moved - base).max(axis=2)[0] > 1e-12)
        # 128 frames at a 20 ms hop: 2.56 s
        np.testing.assert_array_equal(changed, np.arange(192 - 63, 192 + 65))

    def test_extractor_locality(self):
        """Test that samples outside the valid frames' windows leave those frames bit-identical."""
        encoder = Wav2Vec2Encoder(tiny())
        rng = np.random.default_rng(2)
        valid = 320 * 5 + 400
        audio = rng.standard_normal((1, 4000))
        tail = audio.copy()
        tail[0, valid:] = rng.standard_normal(4000 - valid) * 10.0
        base = encoder.extract_features(audio, [valid]).data
        np.testing.assert_array_equal(encoder.extract_features(tail, [valid]).data[..., :6], base[..., :6])
        inside = audio.copy()
        inside[0, valid - 1] += 1.0
        changed = encoder.extract_features(inside, [valid]).data
        self.assertFalse(np.array_equal(changed[..., 5], base[..., 5]))

    def test_padding_does_not_shift_valid_frames(self):
        """Test that a padded batch item encodes like the same audio alone."""
        encoder = Wav2Vec2Encoder(tiny())
        rng = np.random.default_rng(3)
        short, long = rng.standard_normal(1040), rng.standard_normal(2000)
        batch = WaveBatch.from_waveforms([Waveform(short, "s-a", "s"), Waveform(long, "s-b", "s")])
        together = encoder.encode(batch).data.data
        alone = encoder.encode(short[None, :]).data.data
        np.testing.assert_allclose(together[0, :3], alone[0], atol=1e-10)


class TestSpeakerModel(unittest.TestCase):
    """Test cases for SpeakerModel."""

    def test_first_cls_switches_cls_on(self):
        """Test that first+cls pooling enables the cls token."""
        model = SpeakerModel(tiny(), "aam", "first+cls", num_classes=3)
        self.assertTrue(model.config.cls_token)
        self.assertNotIn("head.bias", model.store)

    def test_embed_utterance(self):
        """Test pooled embedding dimensions per method."""
        model = SpeakerModel(tiny(), "ce", "mean+std", num_classes=3)
        wave = Waveform(np.random.default_rng(1).standard_normal(2000), "s-u", "s")
        self.assertEqual(model.embed_utterance(wave).dim, 96)
        self.assertEqual(model.embed_utterance(wave, "quantile").dim, 240)

    def test_classification_loss_finite(self):
        """Test a train-mode loss on a small batch."""
        model = SpeakerModel(tiny(), "aam", "first+cls", num_classes=3)
        waves = WaveBatch(np.random.default_rng(2).standard_normal((3, 1600)), np.array([1600] * 3))
        loss = model.accumulate_gradients(ClassificationBatch(waves, np.array([0, 1, 2])), np.random.default_rng(0))
        self.assertTrue(np.isfinite(loss))
        self.assertIsNotNone(model.store["head.weight"].grad)

    def test_sub_batches_match_full_batch(self):
        """Test that sub-batch accumulation reproduces the full-batch gradient."""
        cfg = tiny(dropout_p=0.0, layerdrop_p=0.0, time_mask_p=0.0, channel_mask_p=0.0)
        waves = WaveBatch(np.random.default_rng(3).standard_normal((4, 1600)), np.array([1600] * 4))
        batch = ClassificationBatch(waves, np.array([0, 1, 0, 1]))
        full = SpeakerModel(cfg, "ce", "mean", num_classes=2)
        full_loss = full.accumulate_gradients(batch, np.random.default_rng(0))
        split = SpeakerModel(cfg, "ce", "mean", num_classes=2)
        split_loss = split.accumulate_gradients(batch, np.random.default_rng(0), sub_batch_size=1)
        self.assertAlmostEqual(full_loss, split_loss, places=10)
        np.testing.assert_allclose(split.store["head.weight"].grad, full.store["head.weight"].grad, atol=1e-10)

    def test_fingerprint_ignores_regularisation(self):
        """Test that only architecture fields enter the fingerprint."""
        base = model_fingerprint(tiny(), "aam", 3)
        self.assertEqual(base, model_fingerprint(tiny(dropout_p=0.0), "aam", 3))
        self.assertNotEqual(base, model_fingerprint(tiny(layers=1), "aam", 3))
        self.assertNotEqual(base, model_fingerprint(tiny(), "aam", 4))


if __name__ == "__main__":
    unittest.main()
