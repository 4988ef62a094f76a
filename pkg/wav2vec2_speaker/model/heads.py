"""
Task heads: softmax cross-entropy, additive angular margin softmax and the
utterance-pair logistic head.
"""

import math
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ShapeError
from ..nn import functional as F
from ..nn.parameters import ParameterStore
from ..nn.tensor import Tensor, concatenate, stack, where
from .encoder import FrameSequence

HEAD_PREFIX = "head."
PAIR_HEAD_PREFIX = "pair_head."
START_VALUE, SEPARATOR_VALUE, END_VALUE = 1.0, -1.0, -1.0


class Variant(str, Enum):
    """Fine-tuning variants."""
    CE = "ce"
    AAM = "aam"
    BCE = "bce"

    @classmethod
    def parse(cls, value: Union[str, "Variant"]) -> "Variant":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown variant {value!r}; expected one of: ce, aam, bce") from None


def ce_forward(embeddings: Tensor, weight: Tensor, bias: Optional[Tensor], targets: np.ndarray) -> Tuple[Tensor, Tensor]:
    """
    Affine logits and mean softmax cross-entropy.

    Args:
        embeddings: (batch, dim)
        weight: (classes, dim)
        bias: (classes,)
        targets: (batch,) class indices

    Returns:
        (logits, loss)
    """
    logits = F.linear(embeddings, weight, bias)
    return logits, F.cross_entropy(logits, targets)


def aam_logits(embeddings: Tensor, weight: Tensor, targets: np.ndarray, scale: float, margin: float) -> Tensor:
    """
    Scaled cosine logits with an additive angular margin on the target class.

    The target logit is s*cos(theta + m) while theta + m stays below pi and
    s*(cos(theta) - m*sin(m)) beyond that.
    """
    targets = np.asarray(targets, dtype=np.int64)
    norms = np.linalg.norm(embeddings.data, axis=-1)
    if np.any(norms == 0):
        raise ValueError(f"cannot normalize zero-norm embeddings at rows {np.flatnonzero(norms == 0).tolist()}")
    classes = weight.shape[0]
    if np.any(targets < 0) or np.any(targets >= classes):
        raise ValueError(f"target index out of range for {classes} classes: {targets.tolist()}")

    cosine = F.l2_normalize(embeddings) @ F.l2_normalize(weight).transpose(1, 0)
    rows = np.arange(len(targets))
    target_cos = cosine[rows, targets]
    sine_sq = 1.0 - target_cos * target_cos
    sine = where(sine_sq.data > 0.0, sine_sq, 0.0).sqrt(grad_floor=1e-12)
    with_margin = target_cos * math.cos(margin) - sine * math.sin(margin)
    fallback = target_cos - margin * math.sin(margin)
    target_logit = where(target_cos.data > math.cos(math.pi - margin), with_margin, fallback)

    one_hot = np.zeros(cosine.shape, dtype=cosine.dtype)
    one_hot[rows, targets] = 1.0
    shifted = cosine + (target_logit - target_cos).reshape(-1, 1) * one_hot
    return shifted * scale


def aam_forward(embeddings: Tensor, weight: Tensor, targets: np.ndarray, scale: float = 30.0,
                margin: float = 0.2) -> Tuple[Tensor, Tensor]:
    """Returns (logits, mean cross-entropy over the margin logits)."""
    logits = aam_logits(embeddings, weight, targets, scale, margin)
    return logits, F.cross_entropy(logits, targets)


def bce_loss(logits: Tensor, labels: Union[np.ndarray, Sequence[bool]]) -> Tensor:
    """Mean stable binary cross-entropy; label True (same speaker) maps to 1."""
    return F.binary_cross_entropy_with_logits(logits, np.asarray(labels, dtype=np.float64))


class ClassifierHead:
    """
    Speaker-classification head over pooled embeddings.

    The CE head is affine; the AAM head has unit-normalized rows and no bias.
    """

    def __init__(
        self,
        store: ParameterStore,
        kind: Union[str, Variant],
        num_classes: int,
        embedding_dim: int,
        scale: float = 30.0,
        margin: float = 0.2,
        seed: int = 0,
    ):
        self.kind = Variant.parse(kind)
        if self.kind is Variant.BCE:
            raise ValueError("the classifier head supports ce and aam only")
        if num_classes < 2:
            raise ValueError(f"classification needs at least 2 classes, got {num_classes}")
        if scale <= 0:
            raise ValueError(f"AAM scale must be > 0, got {scale}")
        if not 0.0 <= margin < math.pi / 2:
            raise ValueError(f"AAM margin must be in [0, pi/2), got {margin}")
        self.store = store
        self.num_classes = num_classes
        self.embedding_dim = embedding_dim
        self.scale = scale
        self.margin = margin
        rng = np.random.default_rng(seed)
        std = math.sqrt(2.0 / (num_classes + embedding_dim))
        store.add(HEAD_PREFIX + "weight", rng.normal(0.0, std, (num_classes, embedding_dim)))
        if self.kind is Variant.CE:
            store.add(HEAD_PREFIX + "bias", np.zeros(num_classes))

    @property
    def weight(self) -> Tensor:
        return self.store[HEAD_PREFIX + "weight"]

    @property
    def bias(self) -> Optional[Tensor]:
        name = HEAD_PREFIX + "bias"
        return self.store[name] if name in self.store else None

    def forward(self, embeddings: Tensor, targets: np.ndarray) -> Tuple[Tensor, Tensor]:
        if embeddings.shape[-1] != self.embedding_dim:
            raise ShapeError(f"head expects {self.embedding_dim}-dim embeddings, got {embeddings.shape}")
        if self.kind is Variant.CE:
            return ce_forward(embeddings, self.weight, self.bias, targets)
        return aam_forward(embeddings, self.weight, targets, self.scale, self.margin)


class PairHead:
    """
    Joint scoring of two utterances.

    Both pre-transformer sequences are joined as [start, a, separator, b, end]
    and run through the transformer once; the logit is an affine map of the
    first output frame.
    """

    def __init__(self, store: ParameterStore, model_dim: int, seed: int = 0):
        self.store = store
        self.model_dim = model_dim
        rng = np.random.default_rng(seed)
        store.add(PAIR_HEAD_PREFIX + "weight", rng.normal(0.0, 0.02, model_dim))
        store.add(PAIR_HEAD_PREFIX + "bias", np.zeros(()))

    def join(self, seq_a: FrameSequence, seq_b: FrameSequence) -> FrameSequence:
        """Token-delimited concatenation of item i of ``seq_a`` with item i of ``seq_b``."""
        if seq_a.batch_size != seq_b.batch_size:
            raise ShapeError(f"pair batches differ in size: {seq_a.batch_size} and {seq_b.batch_size}")
        if seq_a.dim != self.model_dim or seq_b.dim != self.model_dim:
            raise ShapeError(f"pair head expects dim {self.model_dim}, got {seq_a.dim} and {seq_b.dim}")
        dtype = seq_a.data.dtype
        start, sep, end = (Tensor(np.full((1, self.model_dim), v, dtype=dtype))
                           for v in (START_VALUE, SEPARATOR_VALUE, END_VALUE))
        joined, lengths = [], []
        for item in range(seq_a.batch_size):
            len_a, len_b = int(seq_a.valid_lengths[item]), int(seq_b.valid_lengths[item])
            if len_a < 1 or len_b < 1:
                raise ShapeError(f"pair item {item} has an empty sequence")
            joined.append(concatenate([start, seq_a.data[item, :len_a], sep, seq_b.data[item, :len_b], end], axis=0))
            lengths.append(len_a + len_b + 3)
        width = max(lengths)
        padded = []
        for frames, length in zip(joined, lengths):
            if length < width:
                frames = concatenate([frames, Tensor(np.zeros((width - length, self.model_dim), dtype=dtype))], axis=0)
            padded.append(frames)
        return FrameSequence(stack(padded, axis=0), np.array(lengths))

    def forward(self, seq_a: FrameSequence, seq_b: FrameSequence,
                transformer: Callable[[FrameSequence], FrameSequence]) -> Tuple[Tensor, Tensor]:
        """
        Score pairs.

        Args:
            seq_a: First utterances, post-positional and pre-transformer
            seq_b: Second utterances, same stage
            transformer: The encoder's transformer stack (mode and rng bound)

        Returns:
            (logits, scores); the score of a trial is its raw logit
        """
        out = transformer(self.join(seq_a, seq_b))
        first = out.data[:, 0, :]
        logits = first @ self.store[PAIR_HEAD_PREFIX + "weight"].reshape(self.model_dim, 1)
        logits = logits.reshape(-1) + self.store[PAIR_HEAD_PREFIX + "bias"]
        return logits, logits
