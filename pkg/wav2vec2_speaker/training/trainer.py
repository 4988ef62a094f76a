"""
Trainer implementation.

Orchestrates fine-tuning: batch drawing, gradient accumulation, Adam steps
on the learning-rate schedule, periodic validation EER and best-checkpoint
selection.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..analytics.evaluation import evaluate_trials
from ..analytics.metrics_tracker import MetricsTracker
from ..data.corpus import SpeakerCorpus
from ..data.trials import TrialList
from ..exceptions import ConfigError, DivergenceError
from ..model.speaker_model import SpeakerModel
from ..model.weights import import_weights
from .batches import make_batch
from .checkpoint import Checkpoint
from .config import TrainConfig
from .optimizer import Adam
from .schedule import LRScheduler

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    """
    Attributes:
        best: Checkpoint with the lowest validation EER (the final one without validation)
        final: Checkpoint after the last completed step
        metrics: Step-indexed log
        diverged: Training stopped on a non-finite loss or gradient
        divergence: What diverged, when it did
    """
    best: Checkpoint
    final: Checkpoint
    metrics: MetricsTracker
    diverged: bool = False
    divergence: Optional[str] = None


class Trainer:
    """
    Fine-tunes a SpeakerModel on a training corpus.

    All randomness derives from ``config.seed``: initialisation, batch
    drawing, training-mode masking/dropout/LayerDrop and random-pooling
    validation each get their own stream, so identical seeds give identical
    logs.
    """

    def __init__(
        self,
        config: TrainConfig,
        train_corpus: SpeakerCorpus,
        validation_trials: Optional[TrialList] = None,
        validation_corpus: Optional[SpeakerCorpus] = None,
    ):
        """
        Initialize the trainer.

        Args:
            config: Training configuration
            train_corpus: Utterances to draw batches from; its speakers are the classes
            validation_trials: Trials for validation EER (no validation when omitted)
            validation_corpus: Corpus holding the validation utterances (default: train_corpus)
        """
        problems = config.validate()
        if problems:
            raise ConfigError(problems)
        self.config = config
        self.train_corpus = train_corpus
        self.validation_trials = validation_trials
        self.validation_corpus = validation_corpus if validation_corpus is not None else train_corpus

        self.model = SpeakerModel(
            config.encoder, config.variant, config.pooling, train_corpus.num_speakers,
            aam_scale=config.aam_scale, aam_margin=config.aam_margin, seed=config.seed,
        )
        if config.pretrained_weights:
            import_weights(self.model.store, config.pretrained_weights, required=self.model.encoder.parameter_names())
        self.optimizer = Adam(self.model.store, config.adam)
        self.scheduler = LRScheduler(config.bound_schedule())
        self.metrics = MetricsTracker()

        self.batch_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 10]))
        self.model_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))

        self.step_count = 0
        self.history: List[Dict] = []
        self.best = Checkpoint.capture(self.model, self.optimizer, 0)
        self.last_eer: Optional[float] = None
        self.diverged = False
        self.divergence: Optional[str] = None

    def validate(self) -> float:
        """Validation EER of the current parameters; updates the best checkpoint on strict improvement."""
        rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, 12, self.step_count]))
        result = evaluate_trials(self.model, self.validation_trials, self.validation_corpus, rng,
                                 eval_crop_samples=self.config.eval_crop_samples)
        eer = result.eer.eer
        self.metrics.record_validation(self.step_count, eer)
        self.last_eer = eer
        if self.best.validation_eer is None or eer < self.best.validation_eer:
            self.best = Checkpoint.capture(self.model, self.optimizer, self.step_count, eer)
            logger.info("step %d: validation EER %.4f (new best)", self.step_count, eer)
        else:
            logger.info("step %d: validation EER %.4f (best %.4f at step %d)",
                        self.step_count, eer, self.best.validation_eer, self.best.step)
        return eer

    def _validation_due(self) -> bool:
        if self.validation_trials is None:
            return False
        interval = self.config.effective_validation_interval
        return self.step_count % interval == 0 or self.step_count == self.config.iterations

    def step(self) -> Dict:
        """
        Execute one optimizer step.

        Returns:
            Dictionary with step results

        Raises:
            DivergenceError: on a non-finite loss (checked here) or gradient
                (raised by ``adam_step`` through ``self.optimizer.step``);
                parameters stay untouched either way
        """
        lr = self.scheduler.advance()
        self.model.store.zero_grad()
        batch = make_batch(self.train_corpus, self.config, self.batch_rng)
        loss = self.model.accumulate_gradients(batch, self.model_rng, self.config.sub_batch_size)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss} at step {self.step_count + 1}", self.step_count + 1)
        self.optimizer.step(lr)
        self.step_count += 1
        self.metrics.record_step(self.step_count, loss, lr)

        eer = self.validate() if self._validation_due() else None
        step_data = {"step": self.step_count, "loss": loss, "lr": lr, "validation_eer": eer}
        self.history.append(step_data)
        return step_data

    def run(self, verbose: bool = False) -> TrainResult:
        """
        Train for ``config.iterations`` steps or until divergence.

        Args:
            verbose: Print progress every 10% of the run

        Returns:
            TrainResult
        """
        iterations = self.config.iterations
        report_every = max(1, iterations // 10)
        logger.info("training %s for %d steps (%s)", self.model, iterations, self.model.parameter_summary())
        for i in range(iterations):
            try:
                step_data = self.step()
            except DivergenceError as err:
                logger.error("training diverged: %s", err)
                self.diverged = True
                self.divergence = str(err)
                break
            if verbose and (i % report_every == 0 or i == iterations - 1):
                eer = step_data["validation_eer"]
                print(f"Step {i + 1}/{iterations}: "
                      f"loss={step_data['loss']:.4f}, "
                      f"lr={step_data['lr']:.3e}"
                      + (f", EER={eer * 100:.2f}%" if eer is not None else ""))

        final_eer = self.last_eer if self.history and self.history[-1]["validation_eer"] is not None else None
        final = Checkpoint.capture(self.model, self.optimizer, self.step_count, final_eer)
        best = self.best if self.best.validation_eer is not None else final
        return TrainResult(best, final, self.metrics, self.diverged, self.divergence)

    def get_summary(self) -> Dict:
        """
        Get summary statistics of the run.

        Returns:
            Dictionary with summary statistics
        """
        if not self.history:
            return {}
        losses = self.metrics.get_loss_summary()
        best = self.metrics.best_validation()
        return {
            "variant": self.model.variant.value,
            "pooling": self.model.pooling.value,
            "total_steps": self.step_count,
            "iterations": self.config.iterations,
            "trainable_parameters": self.model.parameter_summary()["trainable"],
            "initial_loss": losses["initial_loss"],
            "final_loss": losses["final_loss"],
            "final_lr": self.history[-1]["lr"],
            "best_eer": best[1] if best else None,
            "best_step": best[0] if best else None,
            "validations": len(self.metrics.validations),
            "diverged": self.diverged,
        }

    def print_summary(self):
        """Print a formatted summary of the run."""
        summary = self.get_summary()

        if not summary:
            print("No training data available.")
            return

        print("\n" + "=" * 60)
        print("SPEAKER FINE-TUNING SUMMARY")
        print("=" * 60)
        print("\nRun Details:")
        print(f"  Variant: {summary['variant']}")
        print(f"  Pooling: {summary['pooling']}")
        print(f"  Steps: {summary['total_steps']}/{summary['iterations']}")
        print(f"  Trainable Parameters: {summary['trainable_parameters']:,}")
        print("\nLoss:")
        print(f"  Initial: {summary['initial_loss']:.4f}")
        print(f"  Final: {summary['final_loss']:.4f}")
        print(f"  Final LR: {summary['final_lr']:.3e}")
        print("\nValidation:")
        if summary["best_eer"] is None:
            print("  Not run")
        else:
            print(f"  Best EER: {summary['best_eer'] * 100:.2f}% (step {summary['best_step']})")
            print(f"  Validations: {summary['validations']}")
        if summary["diverged"]:
            print(f"\nDIVERGED: {self.divergence}")
        print("=" * 60 + "\n")


def train_run(
    config: TrainConfig,
    train_corpus: SpeakerCorpus,
    validation_trials: Optional[TrialList] = None,
    validation_corpus: Optional[SpeakerCorpus] = None,
    verbose: bool = False,
) -> TrainResult:
    """Build a Trainer and run it to completion."""
    return Trainer(config, train_corpus, validation_trials, validation_corpus).run(verbose)
