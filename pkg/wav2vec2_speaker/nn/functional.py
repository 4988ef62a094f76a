"""
Differentiable neural-network primitives built on ``Tensor``.

Operations whose composite form would be slow or numerically fragile
(convolution, GELU, softmax, log-softmax, BCE) are fused ``Function``s with
hand-written backward passes; the rest are compositions of tensor ops.
"""

import math
from typing import Mapping, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from ..exceptions import ShapeError
from .tensor import Function, Tensor, as_tensor

MODES = ("train", "eval")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


class Conv1d(Function):
    """Grouped 1-D cross-correlation over (batch, channels, length) arrays."""

    def forward(self, x, weight, bias=None, *, stride: int = 1, padding: int = 0, groups: int = 1):
        batch, channels_in, length = x.shape
        channels_out, per_group, kernel = weight.shape
        self.stride, self.padding, self.groups = stride, padding, groups
        self.x_shape = x.shape
        self.has_bias = bias is not None

        x_padded = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
        frames = (length + 2 * padding - kernel) // stride + 1
        windows = sliding_window_view(x_padded, kernel, axis=2)[:, :, : (frames - 1) * stride + 1 : stride, :]
        self.windows = windows.reshape(batch, groups, per_group, frames, kernel)
        self.weight = weight.reshape(groups, channels_out // groups, per_group, kernel)
        self.padded_length = x_padded.shape[2]

        out = np.empty((batch, groups, channels_out // groups, frames), dtype=np.result_type(x, weight))
        for g in range(groups):
            # (B, C, L, K) x (O, C, K) -> (B, L, O)
            out[:, g] = np.tensordot(self.windows[:, g], self.weight[g], axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        out = out.reshape(batch, channels_out, frames)
        if bias is not None:
            out = out + bias[None, :, None]
        return out

    def backward(self, grad):
        batch, channels_in, length = self.x_shape
        groups, per_out, per_group, kernel = self.weight.shape
        frames = grad.shape[2]
        grad_g = grad.reshape(batch, groups, per_out, frames)

        grad_weight = None
        if self.needs_grad(1):
            grad_weight = np.empty_like(self.weight)
            for g in range(groups):
                grad_weight[g] = np.tensordot(grad_g[:, g], self.windows[:, g], axes=([0, 2], [0, 2]))
            grad_weight = grad_weight.reshape(groups * per_out, per_group, kernel)

        grad_x = None
        if self.needs_grad(0):
            grad_windows = np.empty((batch, groups, per_group, frames, kernel), dtype=grad.dtype)
            for g in range(groups):
                grad_windows[:, g] = np.tensordot(grad_g[:, g], self.weight[g], axes=([1], [0])).transpose(0, 2, 1, 3)
            grad_windows = grad_windows.reshape(batch, channels_in, frames, kernel)
            grad_padded = np.zeros((batch, channels_in, self.padded_length), dtype=grad.dtype)
            span = (frames - 1) * self.stride + 1
            for k in range(kernel):
                grad_padded[:, :, k : k + span : self.stride] += grad_windows[..., k]
            grad_x = grad_padded[:, :, self.padding : self.padding + length]

        if self.has_bias:
            return grad_x, grad_weight, grad.sum(axis=(0, 2))
        return grad_x, grad_weight


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """
    Grouped 1-D convolution (cross-correlation convention).

    Args:
        x: Input of shape (batch, channels_in, length)
        weight: Kernel of shape (channels_out, channels_in / groups, kernel)
        bias: Optional (channels_out,) offset
        stride: Step between output frames
        padding: Zeros added on both sides of the length axis
        groups: Number of independent channel groups

    Returns:
        Tensor of shape (batch, channels_out, floor((length + 2*padding - kernel) / stride) + 1)
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d expects 3-D input and weight, got {x.shape} and {weight.shape}")
    channels_in, channels_out = x.shape[1], weight.shape[0]
    if groups < 1 or channels_in % groups or channels_out % groups:
        raise ShapeError(f"channels must divide into {groups} groups: input {x.shape}, weight {weight.shape}")
    if weight.shape[1] != channels_in // groups:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape}, weight {weight.shape}, groups={groups}")
    if x.shape[2] + 2 * padding < weight.shape[2]:
        raise ShapeError(f"input {x.shape} shorter than kernel {weight.shape} with padding {padding}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if bias is not None and tuple(bias.shape) != (channels_out,):
        raise ShapeError(f"bias shape {bias.shape} does not match weight {weight.shape}")
    inputs = (x, weight) if bias is None else (x, weight, bias)
    return Conv1d.apply(*inputs, stride=stride, padding=padding, groups=groups)


class Gelu(Function):
    def forward(self, x):
        self.x = x
        self.cdf = special.ndtr(x)
        return x * self.cdf

    def backward(self, grad):
        pdf = np.exp(-0.5 * self.x * self.x) * _INV_SQRT_2PI
        return (grad * (self.cdf + self.x * pdf),)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: x * Phi(x) with Phi the Gaussian CDF."""
    return Gelu.apply(x)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Affine map applied independently at every leading position.

    Args:
        x: (..., in_dim)
        weight: (out_dim, in_dim)
        bias: (out_dim,)
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear shape mismatch: input {x.shape}, weight {weight.shape}")
    if bias is not None and tuple(bias.shape) != (weight.shape[0],):
        raise ShapeError(f"linear bias {bias.shape} does not match weight {weight.shape}")
    if x.ndim == 1:
        return linear(x.reshape(1, -1), weight, bias).reshape(weight.shape[0])
    out = x @ weight.transpose(1, 0)
    return out + bias if bias is not None else out


def layer_norm(x: Tensor, gain: Optional[Tensor], offset: Optional[Tensor], eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the (gain, offset) affine map."""
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    normed = centered / (variance + eps).sqrt()
    if gain is not None:
        normed = normed * gain
    if offset is not None:
        normed = normed + offset
    return normed


def group_norm(
    x: Tensor,
    groups: int,
    gain: Optional[Tensor],
    offset: Optional[Tensor],
    eps: float = 1e-5,
    valid: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Normalize each (item, channel group) over its channels and time steps.

    Args:
        x: (batch, channels, length)
        groups: Number of channel groups; ``channels`` must be divisible by it
        gain: Per-channel scale
        offset: Per-channel shift
        valid: Optional (batch, length) bool; statistics only cover True steps
    """
    batch, channels, length = x.shape
    if groups < 1 or channels % groups:
        raise ShapeError(f"{channels} channels are not divisible into {groups} groups")
    if valid is None:
        grouped = x.reshape(batch, groups, (channels // groups) * length)
        normed = layer_norm(grouped, None, None, eps).reshape(batch, channels, length)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != (batch, length):
            raise ShapeError(f"valid mask {valid.shape} does not match (batch, length) = {(batch, length)}")
        steps = valid.sum(axis=1)
        if np.any(steps == 0):
            raise ShapeError(f"items {np.flatnonzero(steps == 0).tolist()} have no valid steps to normalize over")
        grouped = x.reshape(batch, groups, channels // groups, length)
        keep = valid[:, None, None, :].astype(x.dtype)
        count = (steps * (channels // groups)).reshape(batch, 1, 1, 1).astype(x.dtype)
        mean = (grouped * keep).sum(axis=(2, 3), keepdims=True) / count
        centered = grouped - mean
        variance = (centered * centered * keep).sum(axis=(2, 3), keepdims=True) / count
        normed = (centered / (variance + eps).sqrt()).reshape(batch, channels, length)
    if gain is not None:
        normed = normed * gain.reshape(1, channels, 1)
    if offset is not None:
        normed = normed + offset.reshape(1, channels, 1)
    return normed


class Softmax(Function):
    def forward(self, x, axis: int = -1, mask: Optional[np.ndarray] = None):
        self.axis = axis
        if mask is not None:
            x = np.where(mask, x, -np.inf)
        shifted = x - np.max(x, axis=axis, keepdims=True)
        exps = np.exp(shifted)
        self.out = exps / np.sum(exps, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        inner = np.sum(grad * self.out, axis=self.axis, keepdims=True)
        return (self.out * (grad - inner),)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax along ``axis``; positions where ``mask`` is False get probability 0."""
    return Softmax.apply(x, axis=axis, mask=mask)


class LogSoftmax(Function):
    def forward(self, x, axis: int = -1):
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        self.out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
        return self.out

    def backward(self, grad):
        return (grad - np.exp(self.out) * np.sum(grad, axis=self.axis, keepdims=True),)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """
    Mean negative log-likelihood of ``targets`` under softmax(``logits``).

    Args:
        logits: (batch, classes)
        targets: (batch,) integer class indices
    """
    targets = np.asarray(targets, dtype=np.int64)
    classes = logits.shape[-1]
    if targets.shape != (logits.shape[0],):
        raise ShapeError(f"targets {targets.shape} do not match logits {logits.shape}")
    if np.any(targets < 0) or np.any(targets >= classes):
        raise ValueError(f"target index out of range for {classes} classes: {targets.tolist()}")
    log_probs = log_softmax(logits, axis=-1)
    picked = log_probs[np.arange(len(targets)), targets]
    return -picked.mean()


class BinaryCrossEntropyWithLogits(Function):
    def forward(self, logits, labels):
        self.logits, self.labels = logits, labels
        return np.maximum(logits, 0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))

    def backward(self, grad):
        return grad * (special.expit(self.logits) - self.labels), None


def binary_cross_entropy_with_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean BCE in the log-sum-exp form; ``labels`` are 1 (same) or 0 (different)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=logits.dtype).reshape(logits.shape)
    return BinaryCrossEntropyWithLogits.apply(logits, labels).mean()


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Scale vectors along ``axis`` to unit Euclidean norm."""
    norm = (x * x).sum(axis=axis, keepdims=True).sqrt()
    return x / norm


def dropout(x: Tensor, p: float, mode: str, rng: Optional[np.random.Generator]) -> Tensor:
    """
    Inverted dropout: zero each element with probability ``p`` and rescale the
    survivors by 1 / (1 - p); identity in eval mode or when ``p`` is 0.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if check_mode(mode) == "eval" or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    return x * (keep / (1.0 - p)).astype(x.dtype)


def multi_head_self_attention(
    x: Tensor,
    heads: int,
    projections: Mapping[str, Tensor],
    attention_mask: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Scaled dot-product self-attention with ``heads`` heads.

    Args:
        x: (batch, time, dim)
        heads: Number of heads; ``dim`` must be divisible by it
        projections: ``{q,k,v,out}_proj.{weight,bias}`` tensors
        attention_mask: (batch, time) bool, True at valid key positions

    Returns:
        (batch, time, dim) after the output projection
    """
    batch, time, dim = x.shape
    if heads < 1 or dim % heads:
        raise ShapeError(f"model dim {dim} is not divisible by {heads} heads")
    head_dim = dim // heads

    def split(name: str) -> Tensor:
        projected = linear(x, projections[f"{name}.weight"], projections.get(f"{name}.bias"))
        return projected.reshape(batch, time, heads, head_dim).transpose(0, 2, 1, 3)

    q, k, v = split("q_proj"), split("k_proj"), split("v_proj")
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(head_dim))
    key_mask = None if attention_mask is None else np.asarray(attention_mask, dtype=bool)[:, None, None, :]
    weights = softmax(scores, axis=-1, mask=key_mask)
    context = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, time, dim)
    return linear(context, projections["out_proj.weight"], projections.get("out_proj.bias"))
