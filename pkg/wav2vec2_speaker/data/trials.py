"""
Speaker-verification trial lists.

File format: one trial per line, ``<0|1> <id_a> <id_b>``, where 1 marks a
same-speaker pair.
"""

from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterator, List, Set, Tuple, Union, TYPE_CHECKING

import numpy as np

from ..exceptions import CorpusError, TrialFormatError

if TYPE_CHECKING:
    from .corpus import SpeakerCorpus


class TrialLabel(str, Enum):
    SAME = "same"
    DIFFERENT = "different"


@dataclass(frozen=True)
class Trial:
    label: TrialLabel
    utterance_a: str
    utterance_b: str

    @property
    def is_same(self) -> bool:
        return self.label is TrialLabel.SAME


@dataclass
class TrialList:
    """Ordered trials; scoring and reports preserve this order."""
    trials: List[Trial] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self) -> Iterator[Trial]:
        return iter(self.trials)

    def __getitem__(self, index: int) -> Trial:
        return self.trials[index]

    def counts(self) -> Tuple[int, int]:
        """(same, different) trial counts."""
        same = sum(1 for t in self.trials if t.is_same)
        return same, len(self.trials) - same

    def utterance_ids(self) -> List[str]:
        """Every utterance referenced, in first-appearance order."""
        seen: Dict[str, None] = {}
        for t in self.trials:
            seen.setdefault(t.utterance_a)
            seen.setdefault(t.utterance_b)
        return list(seen)

    def labels(self) -> np.ndarray:
        return np.array([t.is_same for t in self.trials], dtype=bool)


def parse_trials(path: Union[str, Path]) -> TrialList:
    """
    Read a trial list.

    Args:
        path: Text file of ``<label> <id_a> <id_b>`` lines

    Returns:
        TrialList in file order

    Raises:
        TrialFormatError: naming the first malformed line
    """
    trials = []
    text = Path(path).read_text()
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TrialFormatError(f"expected '<label> <id_a> <id_b>', got {line!r}", number)
        label, id_a, id_b = parts
        if label not in ("0", "1"):
            raise TrialFormatError(f"label must be 0 or 1, got {label!r}", number)
        if id_a == id_b:
            raise TrialFormatError(f"trial pairs utterance {id_a!r} with itself", number)
        trials.append(Trial(TrialLabel.SAME if label == "1" else TrialLabel.DIFFERENT, id_a, id_b))
    return TrialList(trials)


def write_trials(trials: TrialList, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{1 if t.is_same else 0} {t.utterance_a} {t.utterance_b}\n" for t in trials]
    path.write_text("".join(lines))


def sample_trials(corpus: "SpeakerCorpus", pairs_per_class: int, rng: np.random.Generator) -> TrialList:
    """
    Draw a balanced trial list uniformly over utterance pairs.

    Same-speaker pairs are drawn without replacement from all within-speaker
    combinations, different-speaker pairs from all cross-speaker ones. Both
    classes get ``min(pairs_per_class, available same, available different)``
    trials, shuffled together.
    """
    same_pool = [
        (a, b)
        for speaker in corpus.speakers
        for a, b in combinations(corpus.utterances_of(speaker), 2)
    ]
    ids = [u.utterance_id for u in corpus.utterances]
    total_pairs = len(ids) * (len(ids) - 1) // 2
    different_available = total_pairs - len(same_pool)
    count = min(pairs_per_class, len(same_pool), different_available)
    if count < 1:
        raise CorpusError(
            f"cannot build trials: {len(same_pool)} same-speaker and "
            f"{different_available} different-speaker pairs available"
        )

    picks = rng.choice(len(same_pool), size=count, replace=False)
    same = [Trial(TrialLabel.SAME, *same_pool[i]) for i in sorted(picks)]

    speaker_of = {u.utterance_id: u.speaker_id for u in corpus.utterances}
    chosen: Set[Tuple[str, str]] = set()
    different: List[Trial] = []
    while len(different) < count:
        i, j = sorted(rng.choice(len(ids), size=2, replace=False))
        a, b = ids[i], ids[j]
        if speaker_of[a] == speaker_of[b] or (a, b) in chosen:
            continue
        chosen.add((a, b))
        different.append(Trial(TrialLabel.DIFFERENT, a, b))

    combined = same + different
    order = rng.permutation(len(combined))
    return TrialList([combined[i] for i in order])
