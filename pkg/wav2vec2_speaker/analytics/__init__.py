"""
Analytics layer: trial scoring, EER and training metrics.
"""

from .eer import EerResult, TrialScore, compute_eer, cosine_score, eer_from_arrays, summarize_eers
from .evaluation import (
    EvaluationResult,
    SequenceCache,
    embed_utterances,
    evaluate_repeated,
    evaluate_trials,
    write_report,
    write_scores,
)
from .metrics_tracker import MetricsTracker

__all__ = [
    "EerResult",
    "TrialScore",
    "compute_eer",
    "cosine_score",
    "eer_from_arrays",
    "summarize_eers",
    "EvaluationResult",
    "SequenceCache",
    "embed_utterances",
    "evaluate_repeated",
    "evaluate_trials",
    "write_report",
    "write_scores",
    "MetricsTracker",
]
