#!/usr/bin/env python3
"""
Benchmark scenarios for wav2vec2 speaker recognition.

Trains tiny encoders on one synthetic corpus under different variants,
pooling methods and learning-rate schedules, and compares test EERs.
"""

import tempfile
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from wav2vec2_speaker import EncoderConfig, TrainConfig, Trainer, generate_synthetic_corpus, split_corpus
from wav2vec2_speaker.analytics import evaluate_repeated, summarize_eers
from wav2vec2_speaker.data import sample_trials
from wav2vec2_speaker.training import PairBatchConfig, ScheduleSpec, run_ablation


@dataclass
class ScenarioConfig:
    """Configuration for a benchmark scenario."""
    name: str
    variant: str = "aam"
    pooling: str = "first+cls"
    ablation: Optional[str] = None
    iterations: int = 200
    repeats: int = 1
    seeds: Tuple[int, ...] = (0, 1, 2)


class BenchmarkRunner:
    """Runs benchmark scenarios on a shared corpus and compares results."""

    def __init__(self, workdir: str, speakers: int = 12, utts_per_speaker: int = 12, seed: int = 0):
        """
        Initialize the benchmark runner.

        Args:
            workdir: Directory for the synthetic corpus
            speakers: Corpus speakers
            utts_per_speaker: Utterances per speaker
            seed: Corpus and trial seed
        """
        self.corpus = generate_synthetic_corpus(workdir, speakers, utts_per_speaker, duration_s=2.0, seed=seed)
        self.splits = split_corpus(self.corpus)
        self.validation_trials = sample_trials(self.splits.validation, 100, np.random.default_rng([seed, 1]))
        self.test_trials = sample_trials(self.splits.test, 100, np.random.default_rng([seed, 2]))
        self.results: List[Dict] = []

    def base_config(self, scenario: ScenarioConfig, seed: int) -> TrainConfig:
        return TrainConfig(
            variant=scenario.variant,
            pooling=scenario.pooling,
            encoder=EncoderConfig.tiny(freeze_feature_extractor=False),
            schedule=ScheduleSpec(max_lr=1e-3, lr=1e-3, lr_start=1e-3, lr_end=3e-4, lr_peak=1e-3),
            iterations=scenario.iterations,
            files_per_batch=8,
            crop_seconds=1.0,
            pair_batch=PairBatchConfig(speakers=4, utts_per_speaker=2, same_pairs=4, diff_pairs=4),
            validation_interval=max(1, scenario.iterations // 5),
            seed=seed,
        )

    def train_once(self, scenario: ScenarioConfig, seed: int) -> Dict:
        """Train one seed, restore its best checkpoint and score the test trials."""
        config = self.base_config(scenario, seed)
        if scenario.ablation:
            config = run_ablation(config, scenario.ablation)
        trainer = Trainer(config, self.splits.train, self.validation_trials, self.corpus)
        result = trainer.run()
        result.best.restore(trainer.model)
        evaluations = evaluate_repeated(trainer.model, self.test_trials, self.corpus, scenario.repeats, seed)
        losses = result.metrics.get_loss_summary()
        return {
            "validation_eer": result.best.validation_eer,
            "test_eers": [e.eer.eer for e in evaluations],
            "final_loss": losses.get("final_loss"),
            "diverged": result.diverged,
        }

    def run_scenario(self, scenario: ScenarioConfig) -> Dict:
        """
        Run a single benchmark scenario over its seeds.

        Args:
            scenario: Scenario configuration

        Returns:
            Dictionary with scenario results
        """
        print(f"\n{'=' * 60}")
        print(f"Running: {scenario.name}")
        print(f"{'=' * 60}")
        print(f"  Variant:             {scenario.variant}")
        print(f"  Pooling:             {scenario.pooling if scenario.variant != 'bce' else 'pair logit'}")
        print(f"  Ablation:            {scenario.ablation or 'none'}")
        print(f"  Iterations:          {scenario.iterations}")
        print(f"  Seeds:               {', '.join(str(s) for s in scenario.seeds)}")

        runs = [self.train_once(scenario, seed) for seed in scenario.seeds]
        # one EER per seed; repeated draws are averaged within the seed
        eers = summarize_eers([float(np.mean(r["test_eers"])) for r in runs])
        draws = summarize_eers([eer for r in runs for eer in r["test_eers"]])

        row = {
            "scenario": scenario.name,
            "variant": scenario.variant,
            "pooling": scenario.pooling if scenario.variant != "bce" else None,
            "ablation": scenario.ablation,
            "validation_eer": float(np.median([r["validation_eer"] for r in runs])),
            "test_eer_median": eers["median"],
            "test_eer": eers["mean"],
            "test_eer_std": eers["std"],
            "draw_std": draws["std"],
            "final_loss": float(np.mean([r["final_loss"] for r in runs])),
            "diverged": sum(r["diverged"] for r in runs),
        }

        print("\n  Results:")
        print(f"    Test EER (median):   {row['test_eer_median'] * 100:>10.2f}%")
        print(f"    Test EER (mean):     {row['test_eer'] * 100:>10.2f}% +/- {row['test_eer_std'] * 100:.2f}")
        if scenario.repeats > 1:
            print(f"    Pooling Draw Std:    {row['draw_std'] * 100:>10.2f}%")
        print(f"    Final Loss:          {row['final_loss']:>10.4f}")
        if row["diverged"]:
            print(f"    DIVERGED RUNS: {row['diverged']}")

        self.results.append(row)
        return row

    def run_all(self, scenarios: List[ScenarioConfig]):
        """
        Run all benchmark scenarios.

        Args:
            scenarios: List of scenario configurations
        """
        print("\n" + "=" * 70)
        print("SPEAKER RECOGNITION BENCHMARKS")
        print("=" * 70)

        for scenario in scenarios:
            self.run_scenario(scenario)

        return self.print_summary()

    def print_summary(self) -> Optional[pd.DataFrame]:
        """Print comparison table of all results."""
        if not self.results:
            print("No results to display")
            return None

        df = pd.DataFrame(self.results)

        print("\n" + "=" * 70)
        print("BENCHMARK SUMMARY")
        print("=" * 70)

        print("\nKey Metrics:")
        columns = ["scenario", "validation_eer", "test_eer_median", "test_eer", "test_eer_std", "final_loss"]
        print(df[columns].to_string(index=False))

        print("\n" + "-" * 70)
        print("BEST PERFORMERS:")
        print(f"  Lowest Test EER:     {df.loc[df['test_eer_median'].idxmin(), 'scenario']} "
              f"({df['test_eer_median'].min() * 100:.2f}%)")
        print(f"  Lowest Val. EER:     {df.loc[df['validation_eer'].idxmin(), 'scenario']} "
              f"({df['validation_eer'].min() * 100:.2f}%)")

        pooled = df[df["ablation"].isna() & (df["variant"] == "aam")]
        if len(pooled) > 1:
            print("\n" + "-" * 70)
            print("POOLING RANKING (aam):")
            for _, row in pooled.sort_values("test_eer_median").iterrows():
                print(f"  {row['pooling']:>10}: {row['test_eer_median'] * 100:.2f}%")

        print("\n" + "-" * 70)
        print("STATISTICS:")
        print(f"  Average Test EER:    {df['test_eer'].mean() * 100:.2f}%")
        print(f"  Std Dev Test EER:    {df['test_eer'].std() * 100:.2f}%")
        print(f"  Diverged Runs:       {int(df['diverged'].sum())}")

        return df


def main():
    """Run benchmark suite."""

    scenarios = [
        # Variants
        ScenarioConfig(name="ce, mean pooling", variant="ce", pooling="mean"),
        ScenarioConfig(name="bce pair head", variant="bce"),
    ]
    # Pooling methods with the aam head
    for pooling in ("first+cls", "mean", "max", "mean+std", "quantile", "first", "middle", "last"):
        scenarios.append(ScenarioConfig(name=f"aam, {pooling} pooling", pooling=pooling))
    scenarios.append(ScenarioConfig(name="aam, random pooling", pooling="random", repeats=4))

    # Regularisation and schedule ablations
    for ablation in ("no_layerdrop_dropout_timemask", "lr_constant_1e-5", "lr_exp_decay", "lr_tri_stage"):
        scenarios.append(ScenarioConfig(name=f"aam, {ablation}", ablation=ablation))

    with tempfile.TemporaryDirectory() as workdir:
        runner = BenchmarkRunner(workdir)
        runner.run_all(scenarios)


if __name__ == "__main__":
    main()
