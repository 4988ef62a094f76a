"""
Reduction of frame sequences to fixed-size speaker embeddings.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Union

import numpy as np

from ..exceptions import ShapeError
from ..nn.tensor import Tensor, concatenate, stack
from .encoder import FrameSequence

QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)
STD_GRAD_FLOOR = 1e-5


class PoolingMethod(str, Enum):
    """Pooling strategies; values are the names used in config files."""
    MEAN = "mean"
    MAX = "max"
    MEAN_STD = "mean+std"
    QUANTILE = "quantile"
    FIRST = "first"
    FIRST_CLS = "first+cls"
    MIDDLE = "middle"
    LAST = "last"
    RANDOM = "random"

    @classmethod
    def parse(cls, value: Union[str, "PoolingMethod"]) -> "PoolingMethod":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown pooling method {value!r}; expected one of: {names}") from None

    @property
    def needs_cls(self) -> bool:
        return self is PoolingMethod.FIRST_CLS


def embedding_dim(model_dim: int, method: Union[str, PoolingMethod]) -> int:
    method = PoolingMethod.parse(method)
    if method is PoolingMethod.MEAN_STD:
        return 2 * model_dim
    if method is PoolingMethod.QUANTILE:
        return len(QUANTILES) * model_dim
    return model_dim


@dataclass
class SpeakerEmbedding:
    values: np.ndarray
    source_utterance: str

    @property
    def dim(self) -> int:
        return len(self.values)


def _quantiles(frames: Tensor) -> Tensor:
    # linear interpolation between order statistics
    count, dim = frames.shape
    order = np.argsort(frames.data, axis=0, kind="stable")
    ordered = frames[order, np.arange(dim)[None, :]]
    blocks = []
    for q in QUANTILES:
        position = q * (count - 1)
        low, high = int(np.floor(position)), int(np.ceil(position))
        weight = position - low
        if weight == 0.0:
            blocks.append(ordered[low])
        else:
            blocks.append(ordered[low] * (1.0 - weight) + ordered[high] * weight)
    return concatenate(blocks, axis=0)


def _pool_item(frames: Tensor, method: PoolingMethod, rng: Optional[np.random.Generator]) -> Tensor:
    count = frames.shape[0]
    if method is PoolingMethod.MEAN:
        return frames.mean(axis=0)
    if method is PoolingMethod.MAX:
        return frames.max(axis=0)
    if method is PoolingMethod.MEAN_STD:
        mean = frames.mean(axis=0)
        centered = frames - mean
        std = (centered * centered).mean(axis=0).sqrt(grad_floor=STD_GRAD_FLOOR)
        return concatenate([mean, std], axis=0)
    if method is PoolingMethod.QUANTILE:
        return _quantiles(frames)
    if method is PoolingMethod.FIRST:
        return frames[0]
    if method is PoolingMethod.MIDDLE:
        return frames[(count - 1) // 2]
    if method is PoolingMethod.LAST:
        return frames[count - 1]
    if method is PoolingMethod.RANDOM:
        if rng is None:
            raise ValueError("random pooling needs a random generator")
        return frames[int(rng.integers(0, count))]
    raise ValueError(f"unsupported pooling method {method}")


def pool(seq: FrameSequence, method: Union[str, PoolingMethod], rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Pool every item of ``seq`` over its valid frames.

    The cls frame, when present, is only ever read by first+cls; all other
    methods see the frames after it.

    Args:
        seq: Encoder output
        method: Pooling strategy
        rng: Generator for random pooling

    Returns:
        (batch, embedding_dim(dim, method)) tensor
    """
    method = PoolingMethod.parse(method)
    if method.needs_cls and not seq.cls_inserted:
        raise ValueError("first+cls pooling needs a sequence with a cls token")
    offset = 1 if seq.cls_inserted else 0
    pooled: List[Tensor] = []
    for item in range(seq.batch_size):
        if method.needs_cls:
            pooled.append(seq.data[item, 0])
            continue
        count = int(seq.valid_lengths[item]) - offset
        if count < 1:
            raise ShapeError(f"item {item} has no valid frames to pool")
        pooled.append(_pool_item(seq.data[item, offset : offset + count], method, rng))
    return stack(pooled, axis=0)


def to_embeddings(pooled: Tensor, utterance_ids: List[str]) -> List[SpeakerEmbedding]:
    values = np.asarray(pooled.data, dtype=np.float64)
    return [SpeakerEmbedding(values[i].copy(), uid) for i, uid in enumerate(utterance_ids)]
