"""
Central finite-difference checking of analytic gradients.
"""

import logging
from typing import Callable, Dict, Sequence

import numpy as np

from ..exceptions import GradientCheckError
from .tensor import Tensor

logger = logging.getLogger(__name__)


def gradient_check(
    op: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    step: float = 1e-4,
    tolerance: float = 1e-4,
    seed: int = 0,
) -> float:
    """
    Compare backpropagated gradients with central finite differences.

    The op's output is reduced to a scalar by a fixed random projection so
    every output coordinate contributes. Inputs are promoted to float64.

    Args:
        op: Deterministic function of ``len(inputs)`` tensors
        inputs: Arrays to differentiate with respect to
        step: Finite-difference step
        tolerance: Reported (logged) threshold; the caller decides pass/fail
        seed: Seed of the projection weights

    Returns:
        Max over coordinates of |analytic - numeric| / max(1, |numeric|)
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*tensors)
    projection = np.random.default_rng(seed).standard_normal(out.shape)
    _check_finite(out.data, "output")

    (out * projection).sum().backward()
    worst = 0.0
    for index, (array, tensor) in enumerate(zip(arrays, tensors)):
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(array)
        _check_finite(analytic, f"analytic gradient of input {index}")
        for coordinate in np.ndindex(array.shape):
            original = array[coordinate]
            array[coordinate] = original + step
            plus = _projected(op, arrays, projection)
            array[coordinate] = original - step
            minus = _projected(op, arrays, projection)
            array[coordinate] = original
            numeric = (plus - minus) / (2.0 * step)
            if not np.isfinite(numeric):
                raise GradientCheckError(f"non-finite numeric gradient at input {index}", (index,) + coordinate)
            error = abs(analytic[coordinate] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, float(error))
    if worst >= tolerance:
        logger.warning("gradient check max relative error %.3e exceeds %.1e", worst, tolerance)
    return worst


def parameter_gradient_check(
    loss_fn: Callable[[], Tensor],
    parameters: Dict[str, Tensor],
    step: float = 1e-4,
    max_coordinates: int = 20,
    seed: int = 0,
) -> float:
    """
    Finite-difference check of a scalar loss against named parameter tensors.

    Checks a random sample of at most ``max_coordinates`` coordinates per
    parameter, which keeps whole-model checks affordable.

    Args:
        loss_fn: Recomputes the scalar loss from the current parameter values
        parameters: Tensors (float64, ``requires_grad``) the loss depends on

    Returns:
        Max relative error over the sampled coordinates
    """
    rng = np.random.default_rng(seed)
    for tensor in parameters.values():
        tensor.grad = None
    loss = loss_fn()
    _check_finite(loss.data, "loss")
    loss.backward()
    worst = 0.0
    for name, tensor in parameters.items():
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        _check_finite(analytic, f"gradient of {name}")
        flat_count = tensor.size
        picks = rng.choice(flat_count, size=min(max_coordinates, flat_count), replace=False)
        for flat in picks:
            coordinate = np.unravel_index(flat, tensor.shape)
            original = tensor.data[coordinate]
            tensor.data[coordinate] = original + step
            plus = float(loss_fn().data)
            tensor.data[coordinate] = original - step
            minus = float(loss_fn().data)
            tensor.data[coordinate] = original
            numeric = (plus - minus) / (2.0 * step)
            if not np.isfinite(numeric):
                raise GradientCheckError(f"non-finite numeric gradient for {name}", coordinate)
            error = abs(analytic[coordinate] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, float(error))
    return worst


def _projected(op, arrays, projection) -> float:
    out = op(*[Tensor(a) for a in arrays])
    _check_finite(out.data, "output")
    return float(np.sum(out.data * projection))


def _check_finite(values: np.ndarray, what: str):
    bad = np.argwhere(~np.isfinite(np.asarray(values)))
    if len(bad):
        raise GradientCheckError(f"non-finite {what} at coordinate {tuple(bad[0])}", tuple(bad[0]))
