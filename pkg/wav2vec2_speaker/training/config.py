"""
Training configuration.
"""

from dataclasses import dataclass, field
from typing import List, Optional

from ..data.audio import SAMPLE_RATE
from ..model.config import EncoderConfig
from ..model.heads import Variant
from ..model.pooling import PoolingMethod
from .optimizer import AdamConfig
from .schedule import ScheduleSpec


@dataclass
class PairBatchConfig:
    """Composition of one utterance-pair batch."""
    speakers: int = 8
    utts_per_speaker: int = 4
    same_pairs: int = 16
    diff_pairs: int = 16

    def validate(self) -> List[str]:
        problems = []
        if self.speakers < 2:
            problems.append(f"pair_batch.speakers must be >= 2, got {self.speakers}")
        if self.utts_per_speaker < 2:
            problems.append(f"pair_batch.utts_per_speaker must be >= 2, got {self.utts_per_speaker}")
        same_available = self.speakers * self.utts_per_speaker * (self.utts_per_speaker - 1) // 2
        crops = self.speakers * self.utts_per_speaker
        diff_available = crops * (crops - 1) // 2 - same_available
        if not 0 <= self.same_pairs <= same_available:
            problems.append(f"pair_batch.same_pairs must be in [0, {same_available}], got {self.same_pairs}")
        if not 0 <= self.diff_pairs <= diff_available:
            problems.append(f"pair_batch.diff_pairs must be in [0, {diff_available}], got {self.diff_pairs}")
        if self.same_pairs + self.diff_pairs < 1:
            problems.append("pair batches need at least one pair")
        return problems


@dataclass
class TrainConfig:
    """
    Everything that defines one training run.

    Attributes:
        variant: ce, aam or bce
        pooling: Pooling for ce/aam (ignored by bce)
        encoder: Encoder architecture and regularisation
        schedule: Learning-rate schedule; total_steps defaults to iterations
        adam: Optimizer settings
        iterations: Optimizer steps
        files_per_batch: Crops per classification batch
        crop_seconds: Crop length for training batches
        pair_batch: Composition of bce batches
        validation_interval: Steps between validation EERs (None: 10% of iterations)
        seed: Seed of initialisation, batch drawing and training randomness
        aam_scale: AAM logit scale s
        aam_margin: AAM angular margin m
        sub_batch_size: Files per sequential gradient-accumulation chunk (None: whole batch)
        eval_crop_seconds: Crop for evaluation utterances (None: full length)
        pretrained_weights: Weight manifest to initialise the encoder from
    """
    variant: Variant = Variant.AAM
    pooling: PoolingMethod = PoolingMethod.FIRST_CLS
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    adam: AdamConfig = field(default_factory=AdamConfig)
    iterations: int = 100000
    files_per_batch: int = 66
    crop_seconds: float = 3.0
    pair_batch: PairBatchConfig = field(default_factory=PairBatchConfig)
    validation_interval: Optional[int] = None
    seed: int = 0
    aam_scale: float = 30.0
    aam_margin: float = 0.2
    sub_batch_size: Optional[int] = None
    eval_crop_seconds: Optional[float] = None
    pretrained_weights: Optional[str] = None

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        self.pooling = PoolingMethod.parse(self.pooling)

    @property
    def crop_samples(self) -> int:
        return int(round(self.crop_seconds * SAMPLE_RATE))

    @property
    def eval_crop_samples(self) -> Optional[int]:
        if self.eval_crop_seconds is None:
            return None
        return int(round(self.eval_crop_seconds * SAMPLE_RATE))

    @property
    def sample_budget(self) -> int:
        """Audio samples per classification batch."""
        return self.files_per_batch * self.crop_samples

    @property
    def effective_validation_interval(self) -> int:
        if self.validation_interval is not None:
            return self.validation_interval
        return max(1, int(round(0.1 * self.iterations)))

    def bound_schedule(self) -> ScheduleSpec:
        if self.schedule.total_steps is not None:
            return self.schedule
        return self.schedule.bind(max(1, self.iterations))

    def validate(self) -> List[str]:
        """Return every problem with this configuration (empty when valid)."""
        problems = [f"encoder.{p}" if not p.startswith("encoder") else p for p in self.encoder.validate()]
        problems += self.schedule.validate()
        problems += self.adam.validate()
        problems += self.pair_batch.validate()
        if self.iterations < 0:
            problems.append(f"iterations must be >= 0, got {self.iterations}")
        if self.files_per_batch < 1:
            problems.append(f"files_per_batch must be >= 1, got {self.files_per_batch}")
        if self.crop_seconds <= 0:
            problems.append(f"crop_seconds must be > 0, got {self.crop_seconds}")
        elif self.crop_samples < self.encoder.receptive_field:
            problems.append(
                f"crop_seconds {self.crop_seconds} gives {self.crop_samples} samples, "
                f"shorter than the {self.encoder.receptive_field}-sample receptive field"
            )
        if self.validation_interval is not None and self.validation_interval < 1:
            problems.append(f"validation_interval must be >= 1, got {self.validation_interval}")
        if self.aam_scale <= 0:
            problems.append(f"aam_scale must be > 0, got {self.aam_scale}")
        if not 0.0 <= self.aam_margin < 1.5707963267948966:
            problems.append(f"aam_margin must be in [0, pi/2), got {self.aam_margin}")
        if self.sub_batch_size is not None and self.sub_batch_size < 1:
            problems.append(f"sub_batch_size must be >= 1, got {self.sub_batch_size}")
        if self.eval_crop_seconds is not None and self.eval_crop_seconds <= 0:
            problems.append(f"eval_crop_seconds must be > 0, got {self.eval_crop_seconds}")
        return problems
