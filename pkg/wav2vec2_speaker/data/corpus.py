"""
Speaker corpora: manifests, waveform loading, splits and the synthetic
harmonic-speaker generator.

Manifest format: one row per utterance,
``<utterance_id>\\t<speaker_id>\\t<relative path>``.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..exceptions import CorpusError
from .audio import SAMPLE_RATE, Waveform, load_wav, write_wav

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
NUM_HARMONICS = 4
F0_RANGE_HZ = (90.0, 250.0)
SNR_DB = 20.0
AMPLITUDE_JITTER = 0.1
PEAK_AMPLITUDE = 0.5


@dataclass(frozen=True)
class Utterance:
    utterance_id: str
    speaker_id: str
    path: Path


class SpeakerCorpus:
    """
    Utterances grouped by speaker, backed by WAV files under ``root``.

    Loaded waveforms are cached per utterance; the cache is safe for
    concurrent readers.
    """

    def __init__(self, root: Union[str, Path], utterances: Sequence[Utterance]):
        """
        Initialize a corpus.

        Args:
            root: Directory the utterance paths are relative to
            utterances: Manifest rows; utterance ids must be unique
        """
        self.root = Path(root)
        self.utterances: List[Utterance] = list(utterances)
        self._by_id: Dict[str, Utterance] = {}
        for u in self.utterances:
            if u.utterance_id in self._by_id:
                raise CorpusError(f"duplicate utterance id {u.utterance_id!r}")
            self._by_id[u.utterance_id] = u
        self._by_speaker: Dict[str, List[str]] = {}
        for u in self.utterances:
            self._by_speaker.setdefault(u.speaker_id, []).append(u.utterance_id)
        self.speakers: List[str] = sorted(self._by_speaker)
        self.speaker_index: Dict[str, int] = {s: i for i, s in enumerate(self.speakers)}
        self._cache: Dict[str, Waveform] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.utterances)

    def __contains__(self, utterance_id: str) -> bool:
        return utterance_id in self._by_id

    @property
    def num_speakers(self) -> int:
        return len(self.speakers)

    def utterances_of(self, speaker_id: str) -> List[str]:
        return list(self._by_speaker.get(speaker_id, []))

    def get(self, utterance_id: str) -> Utterance:
        try:
            return self._by_id[utterance_id]
        except KeyError:
            raise CorpusError(f"utterance {utterance_id!r} is not in the corpus") from None

    def load(self, utterance_id: str) -> Waveform:
        """Load (and cache) one utterance's waveform."""
        cached = self._cache.get(utterance_id)
        if cached is not None:
            return cached
        utterance = self.get(utterance_id)
        waveform = load_wav(self.root / utterance.path)
        waveform.speaker_id = utterance.speaker_id
        waveform.utterance_id = utterance.utterance_id
        with self._lock:
            self._cache.setdefault(utterance_id, waveform)
        return self._cache[utterance_id]

    def subset(self, utterance_ids: Sequence[str]) -> "SpeakerCorpus":
        return SpeakerCorpus(self.root, [self.get(i) for i in utterance_ids])

    def missing(self, utterance_ids: Sequence[str]) -> List[str]:
        """Ids from ``utterance_ids`` that the corpus lacks."""
        return [i for i in utterance_ids if i not in self._by_id]

    # Manifest IO

    def write_manifest(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = [f"{u.utterance_id}\t{u.speaker_id}\t{u.path.as_posix()}\n" for u in self.utterances]
        path.write_text("".join(rows))

    @classmethod
    def from_manifest(cls, path: Union[str, Path], root: Optional[Union[str, Path]] = None) -> "SpeakerCorpus":
        """
        Read a manifest; paths resolve relative to ``root`` (default: the
        manifest's directory).
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(path)
        utterances = []
        for number, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusError(f"{path}: line {number}: expected 3 tab-separated fields, got {len(parts)}")
            utterances.append(Utterance(parts[0], parts[1], Path(parts[2])))
        return cls(root if root is not None else path.parent, utterances)

    @classmethod
    def from_directory(cls, root: Union[str, Path]) -> "SpeakerCorpus":
        """Index every ``<speaker>-<utterance>.wav`` file below ``root``."""
        root = Path(root)
        utterances = []
        for wav in sorted(root.rglob("*.wav")):
            speaker, sep, _ = wav.stem.partition("-")
            if not sep:
                logger.warning("skipping %s: no speaker prefix in filename", wav)
                continue
            utterances.append(Utterance(wav.stem, speaker, wav.relative_to(root)))
        return cls(root, utterances)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(speakers={self.num_speakers}, utterances={len(self)}, root={str(self.root)!r})"


@dataclass
class SpeakerProfile:
    """Fixed harmonic signature of one synthetic speaker."""
    speaker_id: str
    f0: float
    amplitudes: np.ndarray


class SyntheticCorpus(SpeakerCorpus):
    """A generated corpus plus the parameters and speaker profiles behind it."""

    def __init__(
        self,
        root: Union[str, Path],
        utterances: Sequence[Utterance],
        utterances_per_speaker: int,
        seed: int,
        profiles: Sequence[SpeakerProfile],
    ):
        super().__init__(root, utterances)
        self.utterances_per_speaker = utterances_per_speaker
        self.seed = seed
        self.profiles = list(profiles)

    @property
    def manifest(self) -> List[Utterance]:
        return self.utterances


def _speaker_profiles(speakers: int, seed: int) -> List[SpeakerProfile]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    low, high = F0_RANGE_HZ
    width = (high - low) / speakers
    strata = rng.permutation(speakers)
    profiles = []
    for s in range(speakers):
        # f0 sits in the middle half of its stratum so neighbours stay apart
        f0 = low + (strata[s] + 0.25 + 0.5 * rng.random()) * width
        formant = f0 * rng.uniform(1.0, NUM_HARMONICS)
        bandwidth = f0 * rng.uniform(0.8, 2.0)
        harmonics = f0 * np.arange(1, NUM_HARMONICS + 1)
        amplitudes = 0.2 + np.exp(-(((harmonics - formant) / bandwidth) ** 2))
        profiles.append(SpeakerProfile(f"spk{s:03d}", float(f0), amplitudes / amplitudes.sum()))
    return profiles


def synthesize_utterance(
    profile: SpeakerProfile,
    num_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    One utterance of a synthetic speaker: the speaker's harmonics with random
    phases and amplitude jitter, plus white noise at ``SNR_DB``.

    Returns:
        float32 samples peak-scaled to ``PEAK_AMPLITUDE``
    """
    t = np.arange(num_samples) / SAMPLE_RATE
    phases = rng.uniform(0.0, 2.0 * np.pi, NUM_HARMONICS)
    gains = profile.amplitudes * (1.0 + AMPLITUDE_JITTER * rng.uniform(-1.0, 1.0, NUM_HARMONICS))
    orders = np.arange(1, NUM_HARMONICS + 1)
    clean = (gains[:, None] * np.sin(2.0 * np.pi * profile.f0 * orders[:, None] * t + phases[:, None])).sum(axis=0)
    noise_std = np.sqrt(np.mean(clean ** 2)) / (10.0 ** (SNR_DB / 20.0))
    noisy = clean + rng.normal(0.0, noise_std, num_samples)
    return (PEAK_AMPLITUDE * noisy / np.max(np.abs(noisy))).astype(np.float32)


def generate_synthetic_corpus(
    output_dir: Union[str, Path],
    speakers: int,
    utts_per_speaker: int,
    duration_s: float = 3.0,
    seed: int = 0,
    workers: int = 1,
) -> SyntheticCorpus:
    """
    Write a corpus of harmonic "speakers" as float WAV files plus a manifest.

    Every utterance draws from its own generator seeded by (seed, speaker,
    utterance), so output is identical regardless of ``workers``.

    Args:
        output_dir: Destination; files go to ``wavs/<speaker>/<speaker>-uttNNNN.wav``
        speakers: Number of speakers (>= 2)
        utts_per_speaker: Utterances per speaker (>= 2)
        duration_s: Utterance length in seconds
        seed: Corpus seed
        workers: Parallel writer threads

    Returns:
        The generated corpus, with ``manifest.tsv`` written under ``output_dir``
    """
    if speakers < 2:
        raise CorpusError(f"need at least 2 speakers, got {speakers}")
    if utts_per_speaker < 2:
        raise CorpusError(f"need at least 2 utterances per speaker, got {utts_per_speaker}")
    num_samples = int(round(duration_s * SAMPLE_RATE))
    if num_samples < 1:
        raise CorpusError(f"duration {duration_s}s yields no samples")

    root = Path(output_dir)
    profiles = _speaker_profiles(speakers, seed)
    jobs = []
    for s, profile in enumerate(profiles):
        for u in range(utts_per_speaker):
            utterance_id = f"{profile.speaker_id}-utt{u:04d}"
            path = Path("wavs") / profile.speaker_id / f"{utterance_id}.wav"
            jobs.append((s, u, profile, Utterance(utterance_id, profile.speaker_id, path)))

    def write(job):
        s, u, profile, utterance = job
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1, s, u]))
        samples = synthesize_utterance(profile, num_samples, rng)
        write_wav(root / utterance.path, Waveform(samples, utterance.utterance_id, profile.speaker_id))

    logger.info("generating %d utterances for %d speakers in %s", len(jobs), speakers, root)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(write, jobs))
    else:
        for job in jobs:
            write(job)

    corpus = SyntheticCorpus(root, [j[3] for j in jobs], utts_per_speaker, seed, profiles)
    corpus.write_manifest(root / MANIFEST_NAME)
    return corpus


@dataclass
class CorpusSplits:
    train: SpeakerCorpus
    validation: SpeakerCorpus
    test: SpeakerCorpus
    held_out: bool = field(default=True)


def split_corpus(
    corpus: SpeakerCorpus,
    validation_fraction: float = 0.2,
    test_fraction: float = 0.2,
) -> CorpusSplits:
    """
    Partition each speaker's utterances into train / validation / test.

    Speakers with at least 5 utterances give ``max(2, round(fraction * n))``
    of their last utterances to each held-out split, so every split keeps
    every speaker and no utterance appears twice. When any speaker has fewer
    than 5 utterances no holdout is possible and all three splits are the
    full corpus.
    """
    if not (0.0 < validation_fraction < 1.0 and 0.0 < test_fraction < 1.0):
        raise ValueError("split fractions must lie in (0, 1)")
    counts = {s: len(corpus.utterances_of(s)) for s in corpus.speakers}
    if min(counts.values(), default=0) < 5:
        logger.warning("corpus too small for a holdout split; validation and test reuse the training utterances")
        return CorpusSplits(corpus, corpus, corpus, held_out=False)

    train, validation, test = [], [], []
    for speaker in corpus.speakers:
        ids = corpus.utterances_of(speaker)
        n = len(ids)
        n_val = max(2, int(round(validation_fraction * n)))
        n_test = max(2, int(round(test_fraction * n)))
        if n - n_val - n_test < 1:
            n_val = n_test = 2
        train.extend(ids[: n - n_val - n_test])
        validation.extend(ids[n - n_val - n_test : n - n_test])
        test.extend(ids[n - n_test :])
    return CorpusSplits(corpus.subset(train), corpus.subset(validation), corpus.subset(test))
