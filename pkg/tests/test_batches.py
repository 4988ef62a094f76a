"""Tests for training batch construction."""

import tempfile
import unittest
from pathlib import Path

import numpy as np

from wav2vec2_speaker.data import generate_synthetic_corpus
from wav2vec2_speaker.exceptions import CorpusError
from wav2vec2_speaker.model import EncoderConfig
from wav2vec2_speaker.training import (
    PairBatchConfig,
    TrainConfig,
    make_batch,
    make_classification_batch,
    make_pair_batch,
    PairBatch,
)


class TestBatches(unittest.TestCase):
    """Test cases for classification and pair batches."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.corpus = generate_synthetic_corpus(Path(cls.tmp.name), speakers=3, utts_per_speaker=22, duration_s=0.05)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def setUp(self):
        """Set up test fixtures."""
        self.config = TrainConfig(variant="ce", pooling="mean", encoder=EncoderConfig.tiny(), crop_seconds=0.1)

    def test_classification_batch(self):
        """Test 66 distinct, cropped, normalized utterances with matching targets."""
        batch = make_classification_batch(self.corpus, self.config, np.random.default_rng(0))
        ids = batch.waves.utterance_ids
        self.assertEqual(len(set(ids)), 66)
        self.assertEqual(batch.waves.data.shape, (66, 1600))
        np.testing.assert_array_equal(batch.waves.valid_lengths, np.full(66, 800))
        for uid, target in zip(ids, batch.targets):
            self.assertEqual(self.corpus.speakers[target], self.corpus.get(uid).speaker_id)
        self.assertAlmostEqual(float(batch.waves.data[0, :800].std()), 1.0, places=6)

    def test_classification_batch_is_seeded(self):
        """Test that equal seeds draw equal batches."""
        a = make_classification_batch(self.corpus, self.config, np.random.default_rng(3))
        b = make_classification_batch(self.corpus, self.config, np.random.default_rng(3))
        self.assertEqual(a.waves.utterance_ids, b.waves.utterance_ids)
        np.testing.assert_array_equal(a.waves.data, b.waves.data)

    def test_classification_batch_too_large(self):
        """Test that a corpus smaller than the batch is refused."""
        self.config.files_per_batch = 67
        with self.assertRaises(CorpusError):
            make_classification_batch(self.corpus, self.config, np.random.default_rng(0))

    def test_pair_batch(self):
        """Test pair counts, labels and uniqueness."""
        config = TrainConfig(variant="bce", encoder=EncoderConfig.tiny(), crop_seconds=0.1,
                             pair_batch=PairBatchConfig(speakers=3, utts_per_speaker=4, same_pairs=6, diff_pairs=10))
        batch = make_batch(self.corpus, config, np.random.default_rng(1))
        self.assertIsInstance(batch, PairBatch)
        self.assertEqual(len(batch.waves), 12)
        self.assertEqual(len(batch), 16)
        self.assertEqual(int(batch.labels.sum()), 6)
        pairs = batch.pairs
        self.assertEqual(len(set((a, b) for a, b, _ in pairs)), 16)
        for a, b, same in pairs:
            self.assertNotEqual(a, b)
            self.assertEqual(same, self.corpus.get(a).speaker_id == self.corpus.get(b).speaker_id)

    def test_pair_batch_needs_speakers(self):
        """Test that too few eligible speakers are refused."""
        self.config.pair_batch = PairBatchConfig(speakers=4, utts_per_speaker=4, same_pairs=1, diff_pairs=1)
        with self.assertRaises(CorpusError):
            make_pair_batch(self.corpus, self.config, np.random.default_rng(0))

    def test_pair_layout_validation(self):
        """Test the default layout and an impossible one."""
        self.assertEqual(PairBatchConfig().validate(), [])
        self.assertEqual(len(PairBatchConfig(speakers=2, utts_per_speaker=2, same_pairs=3, diff_pairs=1).validate()), 1)


if __name__ == "__main__":
    unittest.main()
