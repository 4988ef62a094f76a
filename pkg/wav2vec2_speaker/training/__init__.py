"""
Training layer: optimizer, learning-rate schedules, range test, batches,
the training loop, checkpoints and ablations.
"""

from .optimizer import Adam, AdamConfig, AdamState, adam_step
from .schedule import REFERENCE_MAX_LR, LRScheduler, ScheduleKind, ScheduleSpec, lr_at
from .range_test import RangeTestConfig, RangeTestResult, lr_grid, lr_range_test, smooth_losses
from .config import PairBatchConfig, TrainConfig
from .batches import ClassificationBatch, PairBatch, make_batch, make_classification_batch, make_pair_batch
from .checkpoint import Checkpoint
from .trainer import Trainer, TrainResult, train_run
from .ablations import ABLATIONS, run_ablation

__all__ = [
    "Adam",
    "AdamConfig",
    "AdamState",
    "adam_step",
    "REFERENCE_MAX_LR",
    "LRScheduler",
    "ScheduleKind",
    "ScheduleSpec",
    "lr_at",
    "RangeTestConfig",
    "RangeTestResult",
    "lr_grid",
    "lr_range_test",
    "smooth_losses",
    "PairBatchConfig",
    "TrainConfig",
    "ClassificationBatch",
    "PairBatch",
    "make_batch",
    "make_classification_batch",
    "make_pair_batch",
    "Checkpoint",
    "Trainer",
    "TrainResult",
    "train_run",
    "ABLATIONS",
    "run_ablation",
]
