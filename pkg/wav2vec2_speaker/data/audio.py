"""
Waveform containers and WAV ingestion.

Only mono 16 kHz WAV files with 16-bit PCM or 32-bit float samples are
admitted to the pipeline.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import soundfile as sf

from ..exceptions import AudioFormatError

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
PCM16_SCALE = 32768.0
SUPPORTED_SUBTYPES = ("PCM_16", "FLOAT")


@dataclass
class Waveform:
    """
    A mono utterance at 16 kHz.

    Attributes:
        samples: 1-D amplitude array
        utterance_id: Utterance label
        speaker_id: Optional speaker label
        sample_rate: Always 16000
        valid_length: Samples before any zero tail padding (defaults to all)
    """
    samples: np.ndarray
    utterance_id: str
    speaker_id: Optional[str] = None
    sample_rate: int = SAMPLE_RATE
    valid_length: Optional[int] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            raise AudioFormatError(f"{self.utterance_id}: expected mono samples, got shape {self.samples.shape}")
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(
                f"{self.utterance_id}: sample rate {self.sample_rate} Hz is not supported (need {SAMPLE_RATE})"
            )
        if self.valid_length is None:
            self.valid_length = len(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        """Duration in seconds."""
        return len(self.samples) / self.sample_rate


@dataclass
class WaveBatch:
    """
    Equal-length audio crops with per-item valid lengths.

    Attributes:
        data: (batch, samples) array
        valid_lengths: Unpadded sample count per item
        speaker_ids: Speaker label per item
        utterance_ids: Utterance label per item
    """
    data: np.ndarray
    valid_lengths: np.ndarray
    speaker_ids: List[Optional[str]] = field(default_factory=list)
    utterance_ids: List[str] = field(default_factory=list)

    @classmethod
    def from_waveforms(cls, waveforms: Sequence[Waveform], dtype=np.float64) -> "WaveBatch":
        """Stack waveforms, tail-padding shorter ones with zeros."""
        if not waveforms:
            raise ValueError("cannot build a batch from zero waveforms")
        width = max(len(w) for w in waveforms)
        data = np.zeros((len(waveforms), width), dtype=dtype)
        for row, w in enumerate(waveforms):
            data[row, : len(w)] = w.samples
        return cls(
            data=data,
            valid_lengths=np.array([w.valid_length for w in waveforms], dtype=np.int64),
            speaker_ids=[w.speaker_id for w in waveforms],
            utterance_ids=[w.utterance_id for w in waveforms],
        )

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def num_samples(self) -> int:
        return self.data.shape[1]


def parse_filename(path: Union[str, Path]) -> Tuple[str, Optional[str]]:
    """
    Derive (utterance_id, speaker_id) from a ``<speaker>-<utterance>.wav`` name.

    The utterance id is the whole stem; the speaker id is the part before the
    first ``-`` (None when the stem has no ``-``).
    """
    stem = Path(path).stem
    speaker, sep, _ = stem.partition("-")
    return stem, (speaker if sep else None)


def load_wav(path: Union[str, Path]) -> Waveform:
    """
    Read a mono 16 kHz WAV file.

    Args:
        path: WAV file in 16-bit PCM or 32-bit float encoding

    Returns:
        Waveform with real-valued samples (PCM scaled by 1/32768) and ids
        taken from the filename
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    info = sf.info(str(path))
    problems = []
    if info.format != "WAV":
        problems.append(f"container {info.format} (need WAV)")
    if info.samplerate != SAMPLE_RATE:
        problems.append(f"sample rate {info.samplerate} Hz (need {SAMPLE_RATE})")
    if info.channels != 1:
        problems.append(f"{info.channels} channels (need mono)")
    if info.subtype not in SUPPORTED_SUBTYPES:
        problems.append(f"encoding {info.subtype} (need one of {', '.join(SUPPORTED_SUBTYPES)})")
    if problems:
        raise AudioFormatError(f"{path}: unsupported " + "; ".join(problems))

    if info.subtype == "PCM_16":
        raw, _ = sf.read(str(path), dtype="int16", always_2d=False)
        samples = raw.astype(np.float64) / PCM16_SCALE
    else:
        samples, _ = sf.read(str(path), dtype="float32", always_2d=False)
    utterance_id, speaker_id = parse_filename(path)
    return Waveform(samples=samples, utterance_id=utterance_id, speaker_id=speaker_id)


def write_wav(path: Union[str, Path], waveform: Waveform, subtype: str = "FLOAT"):
    """Write a waveform as a mono 16 kHz WAV file."""
    if subtype not in SUPPORTED_SUBTYPES:
        raise AudioFormatError(f"cannot write encoding {subtype}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = waveform.samples.astype(np.float32) if subtype == "FLOAT" else waveform.samples
    sf.write(str(path), data, waveform.sample_rate, subtype=subtype, format="WAV")


def normalize(w: Waveform) -> Waveform:
    """
    Zero mean, unit population variance over the valid samples.

    A constant waveform normalizes to all zeros. Any zero tail padding stays zero.
    """
    if len(w) == 0:
        raise ValueError(f"{w.utterance_id}: cannot normalize an empty waveform")
    valid = np.asarray(w.samples[: w.valid_length], dtype=np.float64)
    out = np.zeros(len(w), dtype=np.float64)
    std = valid.std()
    if std > 0:
        out[: w.valid_length] = (valid - valid.mean()) / std
    return replace(w, samples=out)


def random_crop(w: Waveform, crop_samples: int, rng: np.random.Generator) -> Waveform:
    """
    Take ``crop_samples`` consecutive samples at a uniform random offset.

    Inputs shorter than the crop are kept whole and zero-padded at the tail;
    ``valid_length`` records the unpadded part.
    """
    if crop_samples < 1:
        raise ValueError(f"crop_samples must be >= 1, got {crop_samples}")
    length = w.valid_length
    if length >= crop_samples:
        offset = int(rng.integers(0, length - crop_samples + 1))
        return replace(w, samples=w.samples[offset : offset + crop_samples].copy(), valid_length=crop_samples)
    padded = np.zeros(crop_samples, dtype=w.samples.dtype)
    padded[:length] = w.samples[:length]
    return replace(w, samples=padded, valid_length=length)
