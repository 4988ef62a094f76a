"""
wav2vec2 Speaker Recognition

Fine-tunes a wav2vec2-style transformer encoder for speaker recognition
with utterance classification (softmax or additive angular margin) or
utterance-pair classification, and scores speaker-verification trials by
equal error rate.
"""

from .data.corpus import SpeakerCorpus, generate_synthetic_corpus, split_corpus
from .data.trials import TrialList, parse_trials, sample_trials
from .model.config import EncoderConfig
from .model.speaker_model import SpeakerModel
from .training.config import TrainConfig
from .training.trainer import Trainer, train_run
from .analytics.eer import compute_eer, cosine_score
from .analytics.evaluation import evaluate_trials

__version__ = "0.1.0"
__all__ = [
    "SpeakerCorpus",
    "generate_synthetic_corpus",
    "split_corpus",
    "TrialList",
    "parse_trials",
    "sample_trials",
    "EncoderConfig",
    "SpeakerModel",
    "TrainConfig",
    "Trainer",
    "train_run",
    "compute_eer",
    "cosine_score",
    "evaluate_trials",
]
