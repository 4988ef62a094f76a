"""
Adam with bias correction, parameter freezing and a divergence guard.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..exceptions import DivergenceError
from ..nn.parameters import ParameterStore

logger = logging.getLogger(__name__)


@dataclass
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.0

    def validate(self) -> List[str]:
        problems = []
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                problems.append(f"adam.{name} must be in [0, 1), got {getattr(self, name)}")
        if self.eps <= 0:
            problems.append(f"adam.eps must be > 0, got {self.eps}")
        if self.weight_decay < 0:
            problems.append(f"adam.weight_decay must be >= 0, got {self.weight_decay}")
        return problems


@dataclass
class AdamState:
    """Moment estimates per parameter name and the number of steps taken."""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(self.step, {k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()})


def adam_step(
    store: ParameterStore,
    grads: Dict[str, np.ndarray],
    config: AdamConfig,
    lr: float,
    state: AdamState,
) -> AdamState:
    """
    One bias-corrected Adam update of every trainable parameter.

    Frozen parameters and their moments are left untouched. Nothing is
    modified when any trainable gradient is non-finite.

    Args:
        store: Parameters to update in place
        grads: Gradient per parameter name
        config: Adam hyperparameters
        lr: Learning rate of this step
        state: Moments and step count, updated in place

    Returns:
        ``state``

    Raises:
        DivergenceError: on a non-finite gradient
    """
    names = store.trainable_names()
    for name in names:
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != store[name].shape:
            raise ValueError(f"{name}: gradient shape {grad.shape} does not match parameter {store[name].shape}")
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient for {name} at optimizer step {state.step + 1}", state.step + 1)

    state.step += 1
    correction1 = 1.0 - config.beta1 ** state.step
    correction2 = 1.0 - config.beta2 ** state.step
    with store.exclusive():
        for name in names:
            param = store[name]
            grad = grads.get(name)
            if grad is None:
                grad = np.zeros_like(param.data)
            if config.weight_decay:
                grad = grad + config.weight_decay * param.data
            if name not in state.m:
                state.m[name] = np.zeros_like(param.data)
                state.v[name] = np.zeros_like(param.data)
            m, v = state.m[name], state.v[name]
            m *= config.beta1
            m += (1.0 - config.beta1) * grad
            v *= config.beta2
            v += (1.0 - config.beta2) * (grad * grad)
            update = (lr / correction1) * m / (np.sqrt(v / correction2) + config.eps)
            param.data = param.data - update.astype(param.dtype)
    return state


class Adam:
    """Stateful wrapper binding a store, its config and its moments."""

    def __init__(self, store: ParameterStore, config: Optional[AdamConfig] = None):
        self.store = store
        self.config = config or AdamConfig()
        problems = self.config.validate()
        if problems:
            raise ValueError("; ".join(problems))
        self.state = AdamState()

    @property
    def step_count(self) -> int:
        return self.state.step

    def step(self, lr: float, grads: Optional[Dict[str, np.ndarray]] = None):
        """Apply one update using ``grads`` or the store's accumulated gradients."""
        adam_step(self.store, grads if grads is not None else self.store.gradients(), self.config, lr, self.state)

    def zero_grad(self):
        self.store.zero_grad()
