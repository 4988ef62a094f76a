"""
Training batch construction for utterance classification and utterance pairs.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np

from ..data.audio import WaveBatch, normalize, random_crop
from ..data.corpus import SpeakerCorpus
from ..exceptions import CorpusError
from ..model.heads import Variant
from .config import PairBatchConfig, TrainConfig


@dataclass
class ClassificationBatch:
    waves: WaveBatch
    targets: np.ndarray


@dataclass
class PairBatch:
    """
    Crops plus labeled pairs of crop indices.

    Attributes:
        waves: All crops of the batch
        index_pairs: (pairs, 2) rows indexing ``waves``
        labels: True where both crops share a speaker
    """
    waves: WaveBatch
    index_pairs: np.ndarray
    labels: np.ndarray

    @property
    def pairs(self) -> List[Tuple[str, str, bool]]:
        """(utterance_a, utterance_b, same) in batch order."""
        ids = self.waves.utterance_ids
        return [(ids[a], ids[b], bool(label)) for (a, b), label in zip(self.index_pairs, self.labels)]

    def __len__(self) -> int:
        return len(self.labels)


def load_crops(corpus: SpeakerCorpus, utterance_ids: List[str], crop_samples: Optional[int],
               rng: Optional[np.random.Generator], dtype: str = "float64") -> WaveBatch:
    """Load, crop (when ``crop_samples`` is set) and normalize utterances into a batch."""
    waveforms = []
    for uid in utterance_ids:
        w = corpus.load(uid)
        if crop_samples is not None:
            w = random_crop(w, crop_samples, rng)
        waveforms.append(normalize(w))
    return WaveBatch.from_waveforms(waveforms, dtype=dtype)


def make_classification_batch(corpus: SpeakerCorpus, cfg: TrainConfig, rng: np.random.Generator) -> ClassificationBatch:
    """
    Draw ``files_per_batch`` distinct utterances uniformly, crop and normalize.

    Targets index ``corpus.speakers``.
    """
    if len(corpus) < cfg.files_per_batch:
        raise CorpusError(f"batch needs {cfg.files_per_batch} utterances, corpus has {len(corpus)}")
    picks = rng.choice(len(corpus), size=cfg.files_per_batch, replace=False)
    ids = [corpus.utterances[i].utterance_id for i in picks]
    waves = load_crops(corpus, ids, cfg.crop_samples, rng, cfg.encoder.dtype)
    targets = np.array([corpus.speaker_index[corpus.get(i).speaker_id] for i in ids], dtype=np.int64)
    return ClassificationBatch(waves, targets)


def make_pair_batch(corpus: SpeakerCorpus, cfg: TrainConfig, rng: np.random.Generator) -> PairBatch:
    """
    Sample speakers and utterances, then same- and different-speaker pairs.

    Same pairs come uniformly from within-speaker combinations of the crops,
    different pairs from cross-speaker combinations; no pair repeats.
    """
    layout: PairBatchConfig = cfg.pair_batch
    eligible = [s for s in corpus.speakers if len(corpus.utterances_of(s)) >= layout.utts_per_speaker]
    if len(eligible) < layout.speakers:
        raise CorpusError(
            f"pair batches need {layout.speakers} speakers with >= {layout.utts_per_speaker} utterances, "
            f"corpus has {len(eligible)}"
        )
    speakers = [eligible[i] for i in rng.choice(len(eligible), size=layout.speakers, replace=False)]
    ids: List[str] = []
    owner: List[int] = []
    for position, speaker in enumerate(speakers):
        pool = corpus.utterances_of(speaker)
        ids.extend(pool[i] for i in rng.choice(len(pool), size=layout.utts_per_speaker, replace=False))
        owner.extend([position] * layout.utts_per_speaker)

    same_pool, diff_pool = [], []
    for a, b in combinations(range(len(ids)), 2):
        (same_pool if owner[a] == owner[b] else diff_pool).append((a, b))
    if layout.same_pairs > len(same_pool) or layout.diff_pairs > len(diff_pool):
        raise CorpusError("pair batch asks for more pairs than its crops allow")
    same = [same_pool[i] for i in rng.choice(len(same_pool), size=layout.same_pairs, replace=False)]
    diff = [diff_pool[i] for i in rng.choice(len(diff_pool), size=layout.diff_pairs, replace=False)]

    waves = load_crops(corpus, ids, cfg.crop_samples, rng, cfg.encoder.dtype)
    index_pairs = np.array(same + diff, dtype=np.int64).reshape(-1, 2)
    labels = np.array([True] * len(same) + [False] * len(diff))
    return PairBatch(waves, index_pairs, labels)


def make_batch(corpus: SpeakerCorpus, cfg: TrainConfig, rng: np.random.Generator):
    """The batch kind the configured variant trains on."""
    if cfg.variant is Variant.BCE:
        return make_pair_batch(corpus, cfg, rng)
    return make_classification_batch(corpus, cfg, rng)
