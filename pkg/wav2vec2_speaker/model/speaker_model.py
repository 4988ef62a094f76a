"""
SpeakerModel: encoder plus task head for one fine-tuning variant.
"""

import hashlib
import json
import logging
from dataclasses import replace
from typing import TYPE_CHECKING, List, Optional, Union

import numpy as np

from ..data.audio import Waveform, WaveBatch, normalize
from ..nn.parameters import ParameterStore
from ..nn.tensor import Tensor, concatenate, no_grad
from .config import EncoderConfig
from .encoder import FrameSequence, Wav2Vec2Encoder
from .heads import ClassifierHead, PairHead, Variant, bce_loss
from .pooling import PoolingMethod, SpeakerEmbedding, embedding_dim, pool, to_embeddings

if TYPE_CHECKING:
    from ..training.batches import ClassificationBatch, PairBatch

logger = logging.getLogger(__name__)


def model_fingerprint(encoder_config: EncoderConfig, variant: Union[str, Variant], num_classes: int) -> str:
    """SHA-256 over everything that fixes parameter shapes and eval-mode outputs."""
    variant = Variant.parse(variant)
    payload = {
        "encoder": {k: list(v) if isinstance(v, tuple) else v for k, v in encoder_config.architecture().items()},
        "variant": variant.value,
        "num_classes": 0 if variant is Variant.BCE else num_classes,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class SpeakerModel:
    """
    A wav2vec2 encoder with a ce, aam or bce head sharing one ParameterStore.

    first+cls pooling switches the encoder's cls token on.
    """

    def __init__(
        self,
        encoder_config: EncoderConfig,
        variant: Union[str, Variant] = Variant.AAM,
        pooling: Union[str, PoolingMethod] = PoolingMethod.FIRST_CLS,
        num_classes: int = 2,
        aam_scale: float = 30.0,
        aam_margin: float = 0.2,
        seed: int = 0,
    ):
        """
        Initialize the model.

        Args:
            encoder_config: Encoder architecture
            variant: Fine-tuning variant
            pooling: Pooling for ce/aam training and default evaluation
            num_classes: Training speakers (ce/aam)
            aam_scale: AAM logit scale s
            aam_margin: AAM angular margin m
            seed: Initialisation seed
        """
        self.variant = Variant.parse(variant)
        self.pooling = PoolingMethod.parse(pooling)
        if self.pooling.needs_cls and self.variant is not Variant.BCE and not encoder_config.cls_token:
            encoder_config = replace(encoder_config, cls_token=True)
        self.num_classes = num_classes
        self.store = ParameterStore(dtype=encoder_config.dtype)
        self.encoder = Wav2Vec2Encoder(encoder_config, self.store, seed=seed)
        if self.variant is Variant.BCE:
            self.head = PairHead(self.store, encoder_config.model_dim, seed=seed + 1)
        else:
            self.head = ClassifierHead(
                self.store, self.variant, num_classes,
                embedding_dim(encoder_config.model_dim, self.pooling),
                scale=aam_scale, margin=aam_margin, seed=seed + 1,
            )

    @property
    def config(self) -> EncoderConfig:
        return self.encoder.config

    def fingerprint(self) -> str:
        return model_fingerprint(self.config, self.variant, self.num_classes)

    # Training losses

    def loss(self, batch: Union["ClassificationBatch", "PairBatch"], rng: np.random.Generator) -> Tensor:
        """Training-mode scalar loss of one batch."""
        if self.variant is Variant.BCE:
            return self.pair_loss(batch, rng)
        return self.classification_loss(batch.waves, batch.targets, rng)

    def classification_loss(self, waves: WaveBatch, targets: np.ndarray, rng: np.random.Generator) -> Tensor:
        seq = self.encoder.encode(waves, "train", rng)
        _, loss = self.head.forward(pool(seq, self.pooling, rng), targets)
        return loss

    def pair_loss(self, batch: "PairBatch", rng: np.random.Generator) -> Tensor:
        # each crop is encoded (and masked) once, then pairs index into the crops
        prefix = self.encoder.encode_prefix(batch.waves, "train", rng)
        left, right = batch.index_pairs[:, 0], batch.index_pairs[:, 1]
        logits, _ = self.head.forward(
            _select(prefix, left), _select(prefix, right),
            lambda seq: self.encoder.transformer_stack(seq, "train", rng),
        )
        return bce_loss(logits, batch.labels)

    def accumulate_gradients(self, batch: Union["ClassificationBatch", "PairBatch"], rng: np.random.Generator,
                             sub_batch_size: Optional[int] = None) -> float:
        """
        Backpropagate the batch loss into the parameter gradients.

        Classification batches are processed in sequential sub-batches of at
        most ``sub_batch_size`` files, each weighted by its share of the batch
        so the summed gradient equals the full-batch gradient.

        Returns:
            The batch loss
        """
        size = len(batch.waves)
        if self.variant is Variant.BCE or not sub_batch_size or sub_batch_size >= size:
            loss = self.loss(batch, rng)
            loss.backward()
            return loss.item()
        total = 0.0
        for start in range(0, size, sub_batch_size):
            rows = slice(start, min(start + sub_batch_size, size))
            part = WaveBatch(batch.waves.data[rows], batch.waves.valid_lengths[rows],
                             batch.waves.speaker_ids[rows], batch.waves.utterance_ids[rows])
            weight = len(part) / size
            loss = self.classification_loss(part, batch.targets[rows], rng) * weight
            loss.backward()
            total += loss.item()
        return total

    # Evaluation

    def embed(self, waves: WaveBatch, method: Optional[Union[str, PoolingMethod]] = None,
              rng: Optional[np.random.Generator] = None) -> Tensor:
        """Eval-mode pooled embeddings, (batch, embedding_dim)."""
        method = PoolingMethod.parse(method) if method is not None else self.pooling
        with no_grad():
            return pool(self.encoder.encode(waves, "eval"), method, rng)

    def embed_utterance(self, w: Waveform, method: Optional[Union[str, PoolingMethod]] = None,
                        rng: Optional[np.random.Generator] = None) -> SpeakerEmbedding:
        """normalize, encode (eval), pool."""
        waves = WaveBatch.from_waveforms([normalize(w)], dtype=self.store.dtype)
        return to_embeddings(self.embed(waves, method, rng), [w.utterance_id])[0]

    def encode_for_pairs(self, waves: WaveBatch) -> FrameSequence:
        """Eval-mode pre-transformer sequences for pair scoring."""
        with no_grad():
            return self.encoder.encode_prefix(waves, "eval")

    def score_pairs(self, seq_a: FrameSequence, seq_b: FrameSequence) -> np.ndarray:
        """Pair logits for item-aligned pre-transformer sequences."""
        with no_grad():
            _, scores = self.head.forward(seq_a, seq_b, lambda seq: self.encoder.transformer_stack(seq, "eval"))
        return np.asarray(scores.data, dtype=np.float64)

    def parameter_summary(self) -> dict:
        return {
            "variant": self.variant.value,
            "pooling": self.pooling.value,
            "parameters": self.store.num_parameters(),
            "trainable": int(sum(self.store[n].size for n in self.store.trainable_names())),
        }

    def __repr__(self) -> str:
        return f"SpeakerModel(variant={self.variant.value}, pooling={self.pooling.value}, store={self.store!r})"


def _select(seq: FrameSequence, items: np.ndarray) -> FrameSequence:
    return FrameSequence(seq.data[np.asarray(items)], seq.valid_lengths[np.asarray(items)], cls_inserted=seq.cls_inserted)


def concat_sequences(sequences: List[FrameSequence]) -> FrameSequence:
    """Stack single-or-multi item sequences, zero-padding to the longest."""
    width = max(s.time for s in sequences)
    parts = []
    for s in sequences:
        data = s.data
        if s.time < width:
            pad = Tensor(np.zeros((s.batch_size, width - s.time, s.dim), dtype=data.dtype))
            data = concatenate([data, pad], axis=1)
        parts.append(data)
    return FrameSequence(
        concatenate(parts, axis=0),
        np.concatenate([s.valid_lengths for s in sequences]),
        cls_inserted=sequences[0].cls_inserted,
    )
