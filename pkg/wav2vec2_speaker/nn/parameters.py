"""
ParameterStore: the named, freezable set of trainable tensors.
"""

import threading
from contextlib import contextmanager
from typing import Dict, Iterable, Iterator, List, Tuple

import numpy as np

from ..exceptions import ShapeError
from .tensor import Tensor


class ParameterStore:
    """
    Named parameters plus the subset excluded from optimizer updates.

    Reads may happen concurrently; anything that mutates parameter values
    should hold ``exclusive()``.
    """

    def __init__(self, dtype: str = "float64"):
        """
        Initialize an empty store.

        Args:
            dtype: Floating-point dtype every parameter is stored in
        """
        self.dtype = np.dtype(dtype)
        self._params: Dict[str, Tensor] = {}
        self._frozen: set = set()
        self._lock = threading.RLock()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        """
        Register a new parameter.

        Args:
            name: Unique parameter name
            value: Initial value (copied and cast to the store dtype)

        Returns:
            The parameter tensor
        """
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        tensor = Tensor(np.array(value, dtype=self.dtype), requires_grad=True)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def items(self) -> Iterable[Tuple[str, Tensor]]:
        return self._params.items()

    def subset(self, prefix: str) -> Dict[str, Tensor]:
        """Parameters under ``prefix``, keyed by the remainder of their name."""
        return {n[len(prefix):]: t for n, t in self._params.items() if n.startswith(prefix)}

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self._params.values()))

    # Freezing

    def freeze(self, prefix: str = ""):
        """Exclude every parameter whose name starts with ``prefix`` from updates."""
        self._frozen.update(n for n in self._params if n.startswith(prefix))

    def unfreeze(self, prefix: str = ""):
        self._frozen.difference_update(n for n in self._params if n.startswith(prefix))

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    @property
    def frozen_names(self) -> frozenset:
        return frozenset(self._frozen)

    def trainable_names(self) -> List[str]:
        return [n for n in self._params if n not in self._frozen]

    # Gradients

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.grad = None

    def gradients(self) -> Dict[str, np.ndarray]:
        """Current gradient per parameter (zeros where none was accumulated)."""
        return {
            name: t.grad if t.grad is not None else np.zeros_like(t.data)
            for name, t in self._params.items()
        }

    # State

    @contextmanager
    def exclusive(self) -> Iterator[None]:
        """Hold the store's write lock."""
        with self._lock:
            yield

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter array."""
        with self._lock:
            return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True):
        """
        Overwrite parameter values in place.

        Args:
            state: Arrays keyed by parameter name
            strict: Require exactly the store's names
        """
        if strict:
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            if missing or extra:
                raise KeyError(f"state mismatch: missing={sorted(missing)}, unexpected={sorted(extra)}")
        with self._lock:
            for name, value in state.items():
                if name not in self._params:
                    continue
                target = self._params[name]
                if tuple(value.shape) != target.shape:
                    raise ShapeError(f"{name}: expected shape {target.shape}, got {tuple(value.shape)}")
                target.data = np.array(value, dtype=self.dtype)

    def copy(self) -> "ParameterStore":
        """A detached snapshot with the same names, values and frozen set."""
        clone = ParameterStore(dtype=self.dtype.name)
        for name, value in self.state_dict().items():
            clone.add(name, value)
        clone._frozen = set(self._frozen)
        return clone

    def __repr__(self) -> str:
        return (f"ParameterStore(params={len(self)}, values={self.num_parameters()}, "
                f"frozen={len(self._frozen)}, dtype={self.dtype.name})")

