"""
Trial-list evaluation.

ce/aam models score a trial by the cosine of two pooled embeddings; bce
models score it with the pair head's logit. Encoder outputs are cached per
utterance so every utterance is encoded once however often trials reuse it
and however many times the pooling is repeated.
"""

import logging
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..data.audio import WaveBatch, normalize, random_crop
from ..data.corpus import SpeakerCorpus
from ..data.trials import TrialList
from ..exceptions import CorpusError
from ..model.encoder import FrameSequence
from ..model.heads import Variant
from ..model.pooling import PoolingMethod, SpeakerEmbedding, pool, to_embeddings
from ..model.speaker_model import SpeakerModel, concat_sequences
from ..nn.tensor import no_grad
from .eer import EerResult, TrialScore, compute_eer, cosine_score, summarize_eers

logger = logging.getLogger(__name__)


class SequenceCache:
    """
    Eval-mode encoder outputs keyed by (stage, utterance id).

    Reads may run concurrently; insertion takes a lock and keeps the first
    value stored under a key.
    """

    def __init__(self):
        self._items: Dict[Tuple[str, str], FrameSequence] = {}
        self._lock = threading.Lock()
        self.encode_count = 0

    def __contains__(self, key: Tuple[str, str]) -> bool:
        return key in self._items

    def __len__(self) -> int:
        return len(self._items)

    def get(self, key: Tuple[str, str]) -> FrameSequence:
        return self._items[key]

    def put(self, key: Tuple[str, str], seq: FrameSequence):
        with self._lock:
            if key not in self._items:
                self._items[key] = seq
                self.encode_count += 1


@dataclass
class EvaluationResult:
    """
    Attributes:
        eer: EER over the trial list
        scores: One score per trial, in trial-list order
        method: Pooling used (None for bce)
        encoded_utterances: Utterances the cache held after this evaluation
    """
    eer: EerResult
    scores: List[TrialScore] = field(repr=False)
    method: Optional[str] = None
    encoded_utterances: int = 0

    def scores_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({
            "score": [s.score for s in self.scores],
            "utterance_a": [s.trial.utterance_a for s in self.scores],
            "utterance_b": [s.trial.utterance_b for s in self.scores],
            "same": [s.trial.is_same for s in self.scores],
        })

    def get_summary(self) -> Dict:
        return {
            "eer": self.eer.eer,
            "threshold": self.eer.threshold,
            "same_trials": self.eer.same_trials,
            "different_trials": self.eer.different_trials,
            "method": self.method or "pair logit",
            "encoded_utterances": self.encoded_utterances,
        }

    def print_summary(self):
        """Print a formatted summary of the evaluation."""
        summary = self.get_summary()
        print("\n" + "=" * 60)
        print("SPEAKER VERIFICATION EVALUATION")
        print("=" * 60)
        print(f"  Scoring: {summary['method']}")
        print(f"  Trials: {summary['same_trials']} same / {summary['different_trials']} different")
        print(f"  Utterances encoded: {summary['encoded_utterances']}")
        print(f"  EER: {summary['eer'] * 100:.2f}%")
        print(f"  Threshold: {summary['threshold']:.4f}")
        print("=" * 60 + "\n")


def _check_trials(trials: TrialList, corpus: SpeakerCorpus):
    missing = corpus.missing(trials.utterance_ids())
    if missing:
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise CorpusError(f"{len(missing)} trial utterance(s) missing from the corpus: {shown}")


def _fill_cache(
    model: SpeakerModel,
    corpus: SpeakerCorpus,
    utterance_ids: Sequence[str],
    cache: SequenceCache,
    stage: str,
    eval_crop_samples: Optional[int],
    batch_size: int,
):
    """Encode every uncached utterance; equal-length utterances share a batch."""
    todo = [uid for uid in utterance_ids if (stage, uid) not in cache]
    if not todo:
        return
    crop_rng = np.random.default_rng(0)
    waveforms = {}
    for uid in todo:
        w = corpus.load(uid)
        if eval_crop_samples is not None:
            w = random_crop(w, eval_crop_samples, crop_rng)
        waveforms[uid] = normalize(w)

    by_length: Dict[int, List[str]] = defaultdict(list)
    for uid in todo:
        by_length[len(waveforms[uid])].append(uid)
    for ids in by_length.values():
        for start in range(0, len(ids), batch_size):
            chunk = ids[start : start + batch_size]
            waves = WaveBatch.from_waveforms([waveforms[u] for u in chunk], dtype=model.store.dtype)
            if stage == "pair":
                seq = model.encode_for_pairs(waves)
            else:
                with no_grad():
                    seq = model.encoder.encode(waves, "eval")
            for i, uid in enumerate(chunk):
                cache.put((stage, uid), FrameSequence(
                    seq.data[i : i + 1].detach(), seq.valid_lengths[i : i + 1], cls_inserted=seq.cls_inserted,
                ))
    logger.info("encoded %d utterances", len(todo))


def embed_utterances(
    model: SpeakerModel,
    corpus: SpeakerCorpus,
    utterance_ids: Sequence[str],
    method: Optional[Union[str, PoolingMethod]] = None,
    rng: Optional[np.random.Generator] = None,
    cache: Optional[SequenceCache] = None,
    eval_crop_samples: Optional[int] = None,
    batch_size: int = 16,
) -> Dict[str, SpeakerEmbedding]:
    """Pooled eval-mode embedding per utterance id (full length unless cropped)."""
    method = PoolingMethod.parse(method) if method is not None else model.pooling
    cache = cache if cache is not None else SequenceCache()
    _fill_cache(model, corpus, utterance_ids, cache, "full", eval_crop_samples, batch_size)
    embeddings = {}
    with no_grad():
        for uid in utterance_ids:
            if uid not in embeddings:
                pooled = pool(cache.get(("full", uid)), method, rng)
                embeddings[uid] = to_embeddings(pooled, [uid])[0]
    return embeddings


def evaluate_trials(
    model: SpeakerModel,
    trials: TrialList,
    corpus: SpeakerCorpus,
    rng: Optional[np.random.Generator] = None,
    method: Optional[Union[str, PoolingMethod]] = None,
    cache: Optional[SequenceCache] = None,
    eval_crop_samples: Optional[int] = None,
    batch_size: int = 16,
) -> EvaluationResult:
    """
    Score a trial list and compute its EER.

    Args:
        model: Trained model (evaluated in eval mode)
        trials: Trials to score; bce scores them in list order as given
        corpus: Corpus holding every trial utterance
        rng: Generator for random pooling
        method: Pooling override for ce/aam (default: the model's pooling)
        cache: Encoder outputs to reuse across evaluations of the same parameters
        eval_crop_samples: Crop evaluation utterances to this length
        batch_size: Utterances (or pairs) per forward pass

    Returns:
        EvaluationResult

    Raises:
        CorpusError: when a trial utterance is not in the corpus
    """
    _check_trials(trials, corpus)
    cache = cache if cache is not None else SequenceCache()
    ids = trials.utterance_ids()

    if model.variant is Variant.BCE:
        _fill_cache(model, corpus, ids, cache, "pair", eval_crop_samples, batch_size)
        values: List[float] = []
        for start in range(0, len(trials), batch_size):
            chunk = [trials[i] for i in range(start, min(start + batch_size, len(trials)))]
            seq_a = concat_sequences([cache.get(("pair", t.utterance_a)) for t in chunk])
            seq_b = concat_sequences([cache.get(("pair", t.utterance_b)) for t in chunk])
            values.extend(float(v) for v in model.score_pairs(seq_a, seq_b))
        scores = [TrialScore(t, v) for t, v in zip(trials, values)]
        used = None
    else:
        method = PoolingMethod.parse(method) if method is not None else model.pooling
        if method is PoolingMethod.RANDOM and rng is None:
            raise ValueError("random pooling evaluation needs a random generator")
        embeddings = embed_utterances(model, corpus, ids, method, rng, cache, eval_crop_samples, batch_size)
        scores = [TrialScore(t, cosine_score(embeddings[t.utterance_a], embeddings[t.utterance_b])) for t in trials]
        used = method.value

    result = EvaluationResult(compute_eer(scores), scores, used, cache.encode_count)
    logger.info("EER %.4f over %d trials (%s)", result.eer.eer, len(trials), used or "pair logit")
    return result


def evaluate_repeated(
    model: SpeakerModel,
    trials: TrialList,
    corpus: SpeakerCorpus,
    repeats: int = 1,
    seed: int = 0,
    method: Optional[Union[str, PoolingMethod]] = None,
    eval_crop_samples: Optional[int] = None,
) -> List[EvaluationResult]:
    """
    Evaluate ``repeats`` times with independent pooling draws.

    The encoder runs once per utterance; only the pooling is repeated.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    cache = SequenceCache()
    return [
        evaluate_trials(model, trials, corpus, np.random.default_rng(np.random.SeedSequence([seed, r])),
                        method, cache, eval_crop_samples)
        for r in range(repeats)
    ]


def write_scores(scores: Sequence[TrialScore], path: Union[str, Path]):
    """One ``<score> <id_a> <id_b>`` line per trial."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{s.score:.8f} {s.trial.utterance_a} {s.trial.utterance_b}\n" for s in scores))


def write_report(results: Sequence[EvaluationResult], path: Union[str, Path]):
    """
    EER report: one ``eer`` line per repeat, then the mean and std across repeats.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for r, result in enumerate(results, start=1):
        lines.append(
            f"eer {r} = {result.eer.eer:.6f} threshold = {result.eer.threshold:.6f} "
            f"same = {result.eer.same_trials} different = {result.eer.different_trials}\n"
        )
    summary = summarize_eers([r.eer for r in results])
    lines.append(f"mean_eer = {summary['mean']:.6f}\nstd_eer = {summary['std']:.6f}\n")
    path.write_text("".join(lines))
