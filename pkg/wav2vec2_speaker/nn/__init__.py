"""
NN layer: differentiable numerical primitives.

Includes the reverse-mode tensor, the parameter store, neural-network
operations and finite-difference gradient checking.
"""

from .tensor import Tensor, Function, no_grad, is_grad_enabled, concatenate, stack, where
from .parameters import ParameterStore
from .functional import (
    conv1d,
    gelu,
    layer_norm,
    group_norm,
    linear,
    multi_head_self_attention,
    dropout,
    softmax,
    log_softmax,
    cross_entropy,
    binary_cross_entropy_with_logits,
    l2_normalize,
)
from .gradcheck import gradient_check, parameter_gradient_check

__all__ = [
    "Tensor",
    "Function",
    "no_grad",
    "is_grad_enabled",
    "concatenate",
    "stack",
    "where",
    "ParameterStore",
    "conv1d",
    "gelu",
    "layer_norm",
    "group_norm",
    "linear",
    "multi_head_self_attention",
    "dropout",
    "softmax",
    "log_softmax",
    "cross_entropy",
    "binary_cross_entropy_with_logits",
    "l2_normalize",
    "gradient_check",
    "parameter_gradient_check",
]
