"""
Data layer: audio ingestion, speaker corpora and trial lists.
"""

from .audio import SAMPLE_RATE, Waveform, WaveBatch, load_wav, write_wav, normalize, random_crop
from .corpus import (
    Utterance,
    SpeakerCorpus,
    SyntheticCorpus,
    SpeakerProfile,
    CorpusSplits,
    generate_synthetic_corpus,
    split_corpus,
)
from .trials import Trial, TrialLabel, TrialList, parse_trials, write_trials, sample_trials

__all__ = [
    "SAMPLE_RATE",
    "Waveform",
    "WaveBatch",
    "load_wav",
    "write_wav",
    "normalize",
    "random_crop",
    "Utterance",
    "SpeakerCorpus",
    "SyntheticCorpus",
    "SpeakerProfile",
    "CorpusSplits",
    "generate_synthetic_corpus",
    "split_corpus",
    "Trial",
    "TrialLabel",
    "TrialList",
    "parse_trials",
    "write_trials",
    "sample_trials",
]
