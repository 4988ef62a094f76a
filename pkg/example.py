#!/usr/bin/env python3
"""
Example usage of wav2vec2 Speaker Recognition.

Generates a small synthetic corpus, fine-tunes a tiny encoder with the AAM
head and scores held-out verification trials.
"""

import tempfile

import numpy as np

from wav2vec2_speaker import (
    EncoderConfig,
    TrainConfig,
    Trainer,
    evaluate_trials,
    generate_synthetic_corpus,
    sample_trials,
    split_corpus,
)
from wav2vec2_speaker.model.pooling import PoolingMethod
from wav2vec2_speaker.training import ScheduleSpec


def main():
    """Run a small fine-tuning and evaluation."""

    print("wav2vec2 Speaker Recognition Example")
    print("=" * 60)

    with tempfile.TemporaryDirectory() as workdir:
        print("\nGenerating synthetic corpus...")
        corpus = generate_synthetic_corpus(
            workdir,
            speakers=8,          # 8 harmonic "speakers"
            utts_per_speaker=10,
            duration_s=1.0,      # 1 s utterances
            seed=42,
        )
        print(f"  Corpus: {corpus}")

        splits = split_corpus(corpus)
        validation_trials = sample_trials(splits.validation, 50, np.random.default_rng(1))
        test_trials = sample_trials(splits.test, 50, np.random.default_rng(2))
        same, different = test_trials.counts()
        print(f"  Test trials: {same} same / {different} different")

        config = TrainConfig(
            variant="aam",
            pooling="first+cls",
            encoder=EncoderConfig.tiny(freeze_feature_extractor=False),
            schedule=ScheduleSpec(max_lr=1e-3),   # OneCycle peak
            iterations=60,
            files_per_batch=8,
            crop_seconds=0.5,
            validation_interval=20,
            seed=42,
        )
        trainer = Trainer(config, splits.train, validation_trials, corpus)
        print(f"  Model: {trainer.model}")

        untrained = evaluate_trials(trainer.model, test_trials, corpus)
        print(f"\nUntrained test EER: {untrained.eer.eer * 100:.2f}%")

        print("\nTraining...")
        print("-" * 60)
        result = trainer.run(verbose=True)
        trainer.print_summary()

        result.best.restore(trainer.model)
        evaluation = evaluate_trials(trainer.model, test_trials, corpus)
        evaluation.print_summary()

        # The same encoder outputs pooled several ways
        print("Embedding size per pooling method:")
        print("-" * 60)
        waveform = corpus.load(test_trials[0].utterance_a)
        for method in (PoolingMethod.MEAN, PoolingMethod.MEAN_STD, PoolingMethod.QUANTILE, PoolingMethod.FIRST_CLS):
            embedding = trainer.model.embed_utterance(waveform, method)
            print(f"  {method.value:>10}: {embedding.dim}")


if __name__ == "__main__":
    main()
