"""
Architecture configuration for the wav2vec2 encoder.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np


@dataclass
class EncoderConfig:
    """
    Encoder hyperparameters. Defaults are the base wav2vec2 network.

    Attributes:
        conv_channels: Channels of every feature-extractor convolution
        conv_kernels: Kernel size per extractor layer
        conv_strides: Stride per extractor layer
        conv_bias: Whether extractor convolutions carry a bias
        model_dim: Transformer width
        ffn_dim: Hidden width of each feed-forward block
        layers: Transformer layer count
        heads: Attention heads per layer
        pos_conv_kernel: Kernel of the relative positional convolution
        pos_conv_groups: Groups of the relative positional convolution
        dropout_p: Dropout on projections, positional output and transformer blocks
        layerdrop_p: Probability of skipping each transformer layer in training
        time_mask_p: Probability that a frame starts a masked time span
        time_mask_span: Length of each masked time span
        channel_mask_p: Probability that a channel starts a masked channel span
        channel_mask_span: Length of each masked channel span
        freeze_feature_extractor: Exclude the extractor from optimizer updates
        cls_token: Prepend a constant +1 frame before the transformer stack
        layer_norm_eps: Variance floor of every layer/group norm
        dtype: Parameter and activation precision
    """
    conv_channels: int = 512
    conv_kernels: Tuple[int, ...] = (10, 3, 3, 3, 3, 2, 2)
    conv_strides: Tuple[int, ...] = (5, 2, 2, 2, 2, 2, 2)
    conv_bias: bool = True
    model_dim: int = 768
    ffn_dim: int = 3072
    layers: int = 12
    heads: int = 12
    pos_conv_kernel: int = 128
    pos_conv_groups: int = 16
    dropout_p: float = 0.1
    layerdrop_p: float = 0.05
    time_mask_p: float = 0.05
    time_mask_span: int = 10
    channel_mask_p: float = 0.005
    channel_mask_span: int = 10
    freeze_feature_extractor: bool = True
    cls_token: bool = False
    layer_norm_eps: float = 1e-5
    dtype: str = "float32"

    # Fields that change parameter shapes or the forward computation in eval mode.
    ARCHITECTURE_FIELDS = (
        "conv_channels", "conv_kernels", "conv_strides", "conv_bias", "model_dim", "ffn_dim",
        "layers", "heads", "pos_conv_kernel", "pos_conv_groups", "cls_token", "layer_norm_eps",
    )

    def __post_init__(self):
        self.conv_kernels = tuple(int(k) for k in self.conv_kernels)
        self.conv_strides = tuple(int(s) for s in self.conv_strides)

    @classmethod
    def tiny(cls, **overrides) -> "EncoderConfig":
        """A laptop-sized encoder with the same topology as the default."""
        values = dict(
            conv_channels=32, model_dim=48, ffn_dim=96, layers=2, heads=2,
            pos_conv_kernel=16, pos_conv_groups=4,
        )
        values.update(overrides)
        return cls(**values)

    @property
    def receptive_field(self) -> int:
        """Input samples seen by one extractor output frame."""
        field, jump = 1, 1
        for kernel, stride in zip(self.conv_kernels, self.conv_strides):
            field += (kernel - 1) * jump
            jump *= stride
        return field

    @property
    def hop(self) -> int:
        """Input samples between consecutive extractor frames."""
        return int(np.prod(self.conv_strides))

    def architecture(self) -> dict:
        return {name: getattr(self, name) for name in self.ARCHITECTURE_FIELDS}

    def validate(self) -> List[str]:
        """Return every problem with this configuration (empty when valid)."""
        problems = []
        if len(self.conv_kernels) != len(self.conv_strides):
            problems.append(
                f"conv_kernels ({len(self.conv_kernels)}) and conv_strides ({len(self.conv_strides)}) differ in length"
            )
        if not self.conv_kernels:
            problems.append("the feature extractor needs at least one convolution")
        if any(k < 1 for k in self.conv_kernels) or any(s < 1 for s in self.conv_strides):
            problems.append("conv kernels and strides must be >= 1")
        for name in ("conv_channels", "model_dim", "ffn_dim", "heads", "pos_conv_kernel", "pos_conv_groups"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.layers < 0:
            problems.append(f"layers must be >= 0, got {self.layers}")
        if self.heads >= 1 and self.model_dim % self.heads:
            problems.append(f"model_dim {self.model_dim} is not divisible by heads {self.heads}")
        if self.pos_conv_groups >= 1 and self.model_dim % self.pos_conv_groups:
            problems.append(f"model_dim {self.model_dim} is not divisible by pos_conv_groups {self.pos_conv_groups}")
        for name in ("dropout_p", "layerdrop_p", "time_mask_p", "channel_mask_p"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                problems.append(f"{name} must be in [0, 1), got {value}")
        for name in ("time_mask_span", "channel_mask_span"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.layer_norm_eps <= 0:
            problems.append(f"layer_norm_eps must be > 0, got {self.layer_norm_eps}")
        if self.dtype not in ("float32", "float64"):
            problems.append(f"dtype must be float32 or float64, got {self.dtype!r}")
        return problems
