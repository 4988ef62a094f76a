"""
Trial scoring and equal error rate.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Sequence, Union

import numpy as np

from ..data.trials import Trial
from ..model.pooling import SpeakerEmbedding

Vector = Union[SpeakerEmbedding, np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class TrialScore:
    trial: Trial
    score: float


@dataclass
class EerResult:
    """
    Attributes:
        eer: Equal error rate in [0, 0.5]
        threshold: Score where FAR and FRR meet (interpolated)
        thresholds: Sorted unique scores followed by +inf
        far_curve: Fraction of different-speaker trials scoring >= each threshold
        frr_curve: Fraction of same-speaker trials scoring < each threshold
        same_trials: Number of same-speaker trials
        different_trials: Number of different-speaker trials
    """
    eer: float
    threshold: float
    thresholds: np.ndarray = field(repr=False)
    far_curve: np.ndarray = field(repr=False)
    frr_curve: np.ndarray = field(repr=False)
    same_trials: int = 0
    different_trials: int = 0


def _values(v: Vector) -> np.ndarray:
    return np.asarray(v.values if isinstance(v, SpeakerEmbedding) else v, dtype=np.float64)


def cosine_score(a: Vector, b: Vector) -> float:
    """<a, b> / (|a| |b|), clipped to [-1, 1]."""
    a, b = _values(a), _values(b)
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ValueError("cannot score a zero-norm embedding")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def eer_from_arrays(scores: Sequence[float], same: Sequence[bool]) -> EerResult:
    """
    EER of scores with same-speaker flags.

    Thresholds sweep the sorted unique scores plus +inf. At the first
    threshold where FRR >= FAR the rates are interpolated linearly on
    FRR - FAR between that threshold and the previous one.
    """
    scores = np.asarray(scores, dtype=np.float64)
    same = np.asarray(same, dtype=bool)
    if scores.shape != same.shape:
        raise ValueError(f"{scores.shape[0]} scores but {same.shape[0]} labels")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    same_scores, diff_scores = np.sort(scores[same]), np.sort(scores[~same])
    if len(same_scores) == 0 or len(diff_scores) == 0:
        raise ValueError(
            f"EER needs both trial classes, got {len(same_scores)} same and {len(diff_scores)} different"
        )

    thresholds = np.append(np.unique(scores), np.inf)
    far = (len(diff_scores) - np.searchsorted(diff_scores, thresholds, side="left")) / len(diff_scores)
    frr = np.searchsorted(same_scores, thresholds, side="left") / len(same_scores)
    gap = frr - far
    k = int(np.argmax(gap >= 0))
    if gap[k] == 0 or k == 0:
        eer, threshold = far[k], thresholds[k]
    else:
        alpha = -gap[k - 1] / (gap[k] - gap[k - 1])
        eer = far[k - 1] + alpha * (far[k] - far[k - 1])
        upper = thresholds[k] if np.isfinite(thresholds[k]) else thresholds[k - 1]
        threshold = thresholds[k - 1] + alpha * (upper - thresholds[k - 1])
    return EerResult(float(eer), float(threshold), thresholds, far, frr, len(same_scores), len(diff_scores))


def compute_eer(scores: Iterable[TrialScore]) -> EerResult:
    scores = list(scores)
    return eer_from_arrays([s.score for s in scores], [s.trial.is_same for s in scores])


def summarize_eers(results: Sequence[Union[EerResult, float]]) -> Dict[str, float]:
    """Mean, population std, median, min and max EER over runs or repeats."""
    values = np.array([r.eer if isinstance(r, EerResult) else r for r in results], dtype=np.float64)
    if len(values) == 0:
        raise ValueError("no EERs to summarize")
    return {
        "runs": int(len(values)),
        "mean": float(values.mean()),
        "std": float(values.std()),
        "median": float(np.median(values)),
        "min": float(values.min()),
        "max": float(values.max()),
    }
