"""
The wav2vec2 network body.

Raw audio flows through a strided convolutional feature extractor, a
per-frame projection, SpecAugment-style masking, a convolutional relative
positional embedding and finally a post-norm transformer stack with
LayerDrop. Parameter names follow the usual wav2vec2 checkpoint layout so
converted weights can be imported by name.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..data.audio import WaveBatch
from ..exceptions import ConfigError, ShapeError
from ..nn import functional as F
from ..nn.parameters import ParameterStore
from ..nn.tensor import Tensor, concatenate, no_grad
from .config import EncoderConfig

logger = logging.getLogger(__name__)

EXTRACTOR_PREFIX = "feature_extractor."
Span = Tuple[int, int]


@dataclass
class MaskMetadata:
    """Masked (start, length) spans per batch item."""
    time_spans: List[List[Span]] = field(default_factory=list)
    channel_spans: List[List[Span]] = field(default_factory=list)

    def masked_frames(self, item: int) -> np.ndarray:
        """Sorted unique frame indices masked in ``item``."""
        frames = {t for start, length in self.time_spans[item] for t in range(start, start + length)}
        return np.array(sorted(frames), dtype=np.int64)


@dataclass
class FrameSequence:
    """
    A batch of embedding sequences with per-item valid lengths.

    Attributes:
        data: (batch, time, dim) tensor
        valid_lengths: Frames per item that carry signal; the rest is padding
        mask_metadata: Spans blanked by masking, when masking ran
        cls_inserted: Whether frame 0 is the prepended cls token
    """
    data: Tensor
    valid_lengths: np.ndarray
    mask_metadata: Optional[MaskMetadata] = None
    cls_inserted: bool = False

    def __post_init__(self):
        self.valid_lengths = np.asarray(self.valid_lengths, dtype=np.int64)
        if self.data.ndim != 3:
            raise ShapeError(f"frame sequences are (batch, time, dim), got {self.data.shape}")
        if self.valid_lengths.shape != (self.data.shape[0],):
            raise ShapeError(f"valid_lengths {self.valid_lengths.shape} do not match batch of {self.data.shape[0]}")
        if np.any(self.valid_lengths > self.data.shape[1]) or np.any(self.valid_lengths < 0):
            raise ShapeError(f"valid_lengths {self.valid_lengths.tolist()} outside [0, {self.data.shape[1]}]")

    @property
    def batch_size(self) -> int:
        return self.data.shape[0]

    @property
    def time(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    def valid_mask(self) -> np.ndarray:
        """(batch, time) bool, True at valid frames."""
        return np.arange(self.time)[None, :] < self.valid_lengths[:, None]

    def with_data(self, data: Tensor) -> "FrameSequence":
        return replace(self, data=data)


def output_length(input_samples: int, cfg: EncoderConfig) -> int:
    """
    Frames produced by the feature extractor for ``input_samples`` samples.

    Applies L' = floor((L - kernel) / stride) + 1 through every convolution.
    """
    if input_samples < cfg.receptive_field:
        raise ShapeError(f"{input_samples} samples are shorter than the {cfg.receptive_field}-sample receptive field")
    length = input_samples
    for kernel, stride in zip(cfg.conv_kernels, cfg.conv_strides):
        length = (length - kernel) // stride + 1
    return length


def mask_spans(seq: FrameSequence, time_spans: Sequence[Sequence[Span]], channel_spans: Sequence[Sequence[Span]]) -> FrameSequence:
    """
    Blank the given spans to zero.

    Args:
        seq: Sequence to mask
        time_spans: Per item, (start, length) runs of whole frames
        channel_spans: Per item, (start, length) runs of channels across all frames
    """
    keep = np.ones(seq.data.shape, dtype=seq.data.dtype)
    for item in range(seq.batch_size):
        for start, length in time_spans[item]:
            keep[item, start : start + length, :] = 0
        for start, length in channel_spans[item]:
            keep[item, :, start : start + length] = 0
    metadata = MaskMetadata([list(s) for s in time_spans], [list(s) for s in channel_spans])
    return replace(seq, data=seq.data * keep, mask_metadata=metadata)


def _sample_spans(length: int, p: float, span: int, rng: np.random.Generator) -> List[Span]:
    # every position independently starts a span; spans are clipped at ``length``
    starts = np.flatnonzero(rng.random(length) < p)
    return [(int(s), int(min(span, length - s))) for s in starts]


def insert_cls_token(seq: FrameSequence) -> FrameSequence:
    """Prepend one all-ones frame to every item; valid lengths grow by one."""
    if seq.cls_inserted:
        raise ValueError("the sequence already carries a cls token")
    ones = Tensor(np.ones((seq.batch_size, 1, seq.dim), dtype=seq.data.dtype))
    return replace(
        seq,
        data=concatenate([ones, seq.data], axis=1),
        valid_lengths=seq.valid_lengths + 1,
        cls_inserted=True,
    )


class Wav2Vec2Encoder:
    """
    Extractor, projector, masking, positional embedding and transformer stack
    sharing one ParameterStore.
    """

    def __init__(self, config: EncoderConfig, store: Optional[ParameterStore] = None, seed: int = 0):
        """
        Initialize the encoder and register its parameters.

        Args:
            config: Architecture and regularisation settings
            store: Store to register parameters in (a new one when omitted)
            seed: Seed of the parameter initialisation
        """
        problems = config.validate()
        if problems:
            raise ConfigError(problems)
        self.config = config
        self.store = store if store is not None else ParameterStore(dtype=config.dtype)
        self._init_parameters(np.random.default_rng(seed))
        if config.freeze_feature_extractor:
            self.store.freeze(EXTRACTOR_PREFIX)

    def _init_parameters(self, rng: np.random.Generator):
        cfg, add = self.config, self.store.add
        channels_in = 1
        for i, kernel in enumerate(cfg.conv_kernels):
            prefix = f"{EXTRACTOR_PREFIX}conv_layers.{i}."
            fan_in = channels_in * kernel
            add(prefix + "conv.weight", rng.normal(0.0, np.sqrt(2.0 / fan_in), (cfg.conv_channels, channels_in, kernel)))
            if cfg.conv_bias:
                add(prefix + "conv.bias", np.zeros(cfg.conv_channels))
            if i == 0:
                add(prefix + "layer_norm.weight", np.ones(cfg.conv_channels))
                add(prefix + "layer_norm.bias", np.zeros(cfg.conv_channels))
            channels_in = cfg.conv_channels

        dim = cfg.model_dim
        add("feature_projection.layer_norm.weight", np.ones(cfg.conv_channels))
        add("feature_projection.layer_norm.bias", np.zeros(cfg.conv_channels))
        self._add_linear("feature_projection.projection.", cfg.conv_channels, dim, rng)

        pos_std = np.sqrt(4.0 / (cfg.pos_conv_kernel * dim))
        add("encoder.pos_conv_embed.conv.weight",
            rng.normal(0.0, pos_std, (dim, dim // cfg.pos_conv_groups, cfg.pos_conv_kernel)))
        add("encoder.pos_conv_embed.conv.bias", np.zeros(dim))
        add("encoder.layer_norm.weight", np.ones(dim))
        add("encoder.layer_norm.bias", np.zeros(dim))

        for i in range(cfg.layers):
            prefix = f"encoder.layers.{i}."
            for name in ("q_proj", "k_proj", "v_proj", "out_proj"):
                self._add_linear(f"{prefix}attention.{name}.", dim, dim, rng)
            add(prefix + "layer_norm.weight", np.ones(dim))
            add(prefix + "layer_norm.bias", np.zeros(dim))
            self._add_linear(prefix + "feed_forward.intermediate_dense.", dim, cfg.ffn_dim, rng)
            self._add_linear(prefix + "feed_forward.output_dense.", cfg.ffn_dim, dim, rng)
            add(prefix + "final_layer_norm.weight", np.ones(dim))
            add(prefix + "final_layer_norm.bias", np.zeros(dim))

    def _add_linear(self, prefix: str, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.store.add(prefix + "weight", rng.normal(0.0, 0.02, (out_dim, in_dim)))
        self.store.add(prefix + "bias", np.zeros(out_dim))

    def parameter_names(self) -> List[str]:
        prefixes = (EXTRACTOR_PREFIX, "feature_projection.", "encoder.")
        return [n for n in self.store.names() if n.startswith(prefixes)]

    def _p(self, name: str) -> Tensor:
        return self.store[name]

    def _p_or_none(self, name: str) -> Optional[Tensor]:
        return self.store[name] if name in self.store else None

    def frame_lengths(self, valid_samples: Sequence[int]) -> np.ndarray:
        return np.array([output_length(int(n), self.config) for n in valid_samples], dtype=np.int64)

    # Stages

    def extract_features(self, batch: Union[WaveBatch, np.ndarray],
                         valid_samples: Optional[Sequence[int]] = None) -> Tensor:
        """
        Raw audio (batch, samples) to latent frames (batch, conv_channels, frames).

        The first convolution is followed by per-channel group norm, every
        convolution by GELU. Group-norm statistics only cover first-layer
        frames computed entirely from valid samples, so zero tails of padded
        items do not shift their valid frames.
        """
        cfg = self.config
        data = batch.data if isinstance(batch, WaveBatch) else np.asarray(batch)
        if data.ndim != 2:
            raise ShapeError(f"expected (batch, samples) audio, got {data.shape}")
        output_length(data.shape[1], cfg)
        if isinstance(batch, WaveBatch):
            valid_samples = batch.valid_lengths
        frozen = all(self.store.is_frozen(n) for n in self.store.names() if n.startswith(EXTRACTOR_PREFIX))
        x = Tensor(data[:, None, :].astype(self.store.dtype))
        if frozen:
            with no_grad():
                return self._extract(x, valid_samples)
        return self._extract(x, valid_samples)

    def _first_layer_valid(self, samples: int, valid_samples: Optional[Sequence[int]]) -> Optional[np.ndarray]:
        if valid_samples is None:
            return None
        kernel, stride = self.config.conv_kernels[0], self.config.conv_strides[0]
        frames = (samples - kernel) // stride + 1
        counts = np.clip((np.asarray(valid_samples, dtype=np.int64) - kernel) // stride + 1, 1, frames)
        if np.all(counts == frames):
            return None
        return np.arange(frames)[None, :] < counts[:, None]

    def _extract(self, x: Tensor, valid_samples: Optional[Sequence[int]] = None) -> Tensor:
        cfg = self.config
        first_valid = self._first_layer_valid(x.shape[2], valid_samples)
        for i, stride in enumerate(cfg.conv_strides):
            prefix = f"{EXTRACTOR_PREFIX}conv_layers.{i}."
            x = F.conv1d(x, self._p(prefix + "conv.weight"), self._p_or_none(prefix + "conv.bias"), stride=stride)
            if i == 0:
                x = F.group_norm(x, cfg.conv_channels, self._p(prefix + "layer_norm.weight"),
                                 self._p(prefix + "layer_norm.bias"), cfg.layer_norm_eps, valid=first_valid)
            x = F.gelu(x)
        return x

    def project(self, latent: Tensor, valid_lengths: np.ndarray, mode: str = "eval",
                rng: Optional[np.random.Generator] = None) -> FrameSequence:
        """Per-frame layer norm, linear map to model_dim, dropout (no activation)."""
        frames = latent.transpose(0, 2, 1)
        normed = F.layer_norm(frames, self._p("feature_projection.layer_norm.weight"),
                              self._p("feature_projection.layer_norm.bias"), self.config.layer_norm_eps)
        projected = F.linear(normed, self._p("feature_projection.projection.weight"),
                             self._p("feature_projection.projection.bias"))
        return FrameSequence(F.dropout(projected, self.config.dropout_p, mode, rng), valid_lengths)

    def apply_masks(self, seq: FrameSequence, mode: str = "eval",
                    rng: Optional[np.random.Generator] = None) -> FrameSequence:
        """
        Blank random time spans (whole frames) and channel spans (one channel
        across all frames) in train mode; identity in eval mode.
        """
        cfg = self.config
        if F.check_mode(mode) == "eval" or (cfg.time_mask_p == 0.0 and cfg.channel_mask_p == 0.0):
            return seq
        time_spans, channel_spans = [], []
        for item in range(seq.batch_size):
            valid = int(seq.valid_lengths[item])
            time_spans.append(_sample_spans(valid, cfg.time_mask_p, cfg.time_mask_span, rng) if cfg.time_mask_p else [])
            channel_spans.append(
                _sample_spans(seq.dim, cfg.channel_mask_p, cfg.channel_mask_span, rng) if cfg.channel_mask_p else []
            )
        return mask_spans(seq, time_spans, channel_spans)

    def positional_conv(self, x: Tensor) -> Tensor:
        """Grouped convolution over time, trimmed back to the input length, then GELU."""
        cfg = self.config
        time = x.shape[1]
        conv = F.conv1d(x.transpose(0, 2, 1), self._p("encoder.pos_conv_embed.conv.weight"),
                        self._p("encoder.pos_conv_embed.conv.bias"),
                        padding=cfg.pos_conv_kernel // 2, groups=cfg.pos_conv_groups)
        return F.gelu(conv[:, :, :time]).transpose(0, 2, 1)

    def add_positional(self, seq: FrameSequence, mode: str = "eval",
                       rng: Optional[np.random.Generator] = None) -> FrameSequence:
        """Sum the relative positional embedding with its input, then layer norm and dropout."""
        keep = seq.valid_mask()[:, :, None].astype(seq.data.dtype)
        x = seq.data * keep
        x = x + self.positional_conv(x)
        x = F.layer_norm(x, self._p("encoder.layer_norm.weight"), self._p("encoder.layer_norm.bias"),
                         self.config.layer_norm_eps)
        return seq.with_data(F.dropout(x, self.config.dropout_p, mode, rng))

    def transformer_layer(self, x: Tensor, index: int, attention_mask: np.ndarray, mode: str,
                          rng: Optional[np.random.Generator]) -> Tensor:
        cfg = self.config
        prefix = f"encoder.layers.{index}."
        attended = F.multi_head_self_attention(x, cfg.heads, self.store.subset(prefix + "attention."), attention_mask)
        x = F.layer_norm(x + F.dropout(attended, cfg.dropout_p, mode, rng),
                         self._p(prefix + "layer_norm.weight"), self._p(prefix + "layer_norm.bias"), cfg.layer_norm_eps)
        hidden = F.gelu(F.linear(x, self._p(prefix + "feed_forward.intermediate_dense.weight"),
                                 self._p(prefix + "feed_forward.intermediate_dense.bias")))
        hidden = F.dropout(hidden, cfg.dropout_p, mode, rng)
        out = F.linear(hidden, self._p(prefix + "feed_forward.output_dense.weight"),
                       self._p(prefix + "feed_forward.output_dense.bias"))
        return F.layer_norm(x + F.dropout(out, cfg.dropout_p, mode, rng),
                            self._p(prefix + "final_layer_norm.weight"), self._p(prefix + "final_layer_norm.bias"),
                            cfg.layer_norm_eps)

    def transformer_stack(self, seq: FrameSequence, mode: str = "eval",
                          rng: Optional[np.random.Generator] = None) -> FrameSequence:
        """Post-norm transformer layers; in train mode each layer is skipped with probability layerdrop_p."""
        cfg = self.config
        training = F.check_mode(mode) == "train"
        attention_mask = seq.valid_mask()
        x = seq.data
        for index in range(cfg.layers):
            if training and cfg.layerdrop_p > 0.0 and rng.random() < cfg.layerdrop_p:
                continue
            x = self.transformer_layer(x, index, attention_mask, mode, rng)
        return seq.with_data(x)

    # Composition

    def encode_prefix(self, batch: Union[WaveBatch, np.ndarray], mode: str = "eval",
                      rng: Optional[np.random.Generator] = None,
                      valid_samples: Optional[Sequence[int]] = None) -> FrameSequence:
        """Everything up to (and excluding) the transformer stack."""
        if F.check_mode(mode) == "train" and rng is None:
            raise ValueError("train mode needs a random generator")
        if isinstance(batch, WaveBatch):
            valid_samples = batch.valid_lengths
        elif valid_samples is None:
            valid_samples = [np.asarray(batch).shape[1]] * np.asarray(batch).shape[0]
        lengths = self.frame_lengths(valid_samples)
        latent = self.extract_features(batch, valid_samples)
        seq = self.project(latent, lengths, mode, rng)
        seq = self.apply_masks(seq, mode, rng)
        return self.add_positional(seq, mode, rng)

    def encode(self, batch: Union[WaveBatch, np.ndarray], mode: str = "eval",
               rng: Optional[np.random.Generator] = None,
               valid_samples: Optional[Sequence[int]] = None) -> FrameSequence:
        """
        Full forward pass: (batch, samples) audio to (batch, frames, model_dim).

        Args:
            batch: Normalized audio
            mode: "train" enables dropout, masking and LayerDrop
            rng: Generator for the stochastic parts (required in train mode)
            valid_samples: Unpadded sample counts when ``batch`` is a bare array

        Returns:
            FrameSequence with output_length(samples) frames, one more with a cls token
        """
        seq = self.encode_prefix(batch, mode, rng, valid_samples)
        if self.config.cls_token:
            seq = insert_cls_token(seq)
        return self.transformer_stack(seq, mode, rng)
