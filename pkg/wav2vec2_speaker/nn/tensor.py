"""
Reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps an ndarray and remembers the ``Function`` that produced it.
Calling ``backward()`` on a scalar walks the recorded graph in reverse
topological order and accumulates gradients into the leaf tensors that have
``requires_grad`` set.
"""

import threading
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    """Whether operations on the current thread record a gradient tape."""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording on the current thread (evaluation passes)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """
    An ndarray with an optional gradient and a link to the op that made it.

    Attributes:
        data: Underlying floating-point array
        requires_grad: Whether gradients flow to (or through) this tensor
        grad: Accumulated gradient, same shape as ``data`` (leaves only)
    """

    # Makes ``ndarray <op> Tensor`` dispatch to the Tensor's reflected method.
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, _ctx: Optional["Function"] = None):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._ctx = _ctx

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __len__(self) -> int:
        return len(self.data)

    def numpy(self) -> np.ndarray:
        """Return the underlying array (no copy)."""
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A tensor sharing data but cut from the tape."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _lift(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # Arithmetic

    def __add__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self, self._lift(other))

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return Add.apply(self._lift(other), self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(self, self._lift(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Sub.apply(self._lift(other), self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(self, self._lift(other))

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return Mul.apply(self._lift(other), self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return Div.apply(self, self._lift(other))

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return Div.apply(self._lift(other), self)

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return MatMul.apply(self, self._lift(other))

    def __getitem__(self, index) -> "Tensor":
        return GetItem.apply(self, index=index)

    # Reductions and shape ops

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int, keepdims: bool = False) -> "Tensor":
        return Max.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Transpose.apply(self, axes=axes)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def sqrt(self, grad_floor: float = 0.0) -> "Tensor":
        return Sqrt.apply(self, grad_floor=grad_floor)

    # Backpropagation

    def backward(self, grad: Optional[np.ndarray] = None):
        """
        Accumulate d(self)/d(leaf) into every leaf tensor with ``requires_grad``.

        Args:
            grad: Upstream gradient; defaults to 1 for scalar tensors
        """
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(self._topological_order()):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._ctx is None:
                if node.requires_grad:
                    node.grad = node_grad if node.grad is None else node.grad + node_grad
                continue
            for parent, parent_grad in zip(node._ctx.parents, node._ctx.backward(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.parents:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


def as_tensor(value: ArrayLike, dtype=None) -> Tensor:
    """Wrap arrays and scalars; tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


class Function:
    """
    One differentiable operation.

    ``forward`` maps input arrays to an output array and may stash whatever the
    backward pass needs on ``self``; ``backward`` maps the output gradient to one
    gradient per input (``None`` for inputs that need none).
    """

    def __init__(self, *parents: Tensor):
        self.parents = parents

    @classmethod
    def apply(cls, *inputs: ArrayLike, **kwargs) -> Tensor:
        tensors = tuple(as_tensor(x) for x in inputs)
        ctx = cls(*tensors)
        out = ctx.forward(*(t.data for t in tensors), **kwargs)
        track = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=track, _ctx=ctx if track else None)

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError

    def needs_grad(self, index: int) -> bool:
        return self.parents[index].requires_grad


class Add(Function):
    def forward(self, x, y):
        self.shapes = (x.shape, y.shape)
        return x + y

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, x, y):
        self.shapes = (x.shape, y.shape)
        return x - y

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        gx = unbroadcast(grad * self.y, self.x.shape) if self.needs_grad(0) else None
        gy = unbroadcast(grad * self.x, self.y.shape) if self.needs_grad(1) else None
        return gx, gy


class Div(Function):
    def forward(self, x, y):
        self.x, self.y = x, y
        return x / y

    def backward(self, grad):
        gx = unbroadcast(grad / self.y, self.x.shape) if self.needs_grad(0) else None
        gy = unbroadcast(-grad * self.x / (self.y * self.y), self.y.shape) if self.needs_grad(1) else None
        return gx, gy


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, x, exponent: float):
        self.x, self.exponent = x, exponent
        return x ** exponent

    def backward(self, grad):
        return (grad * self.exponent * self.x ** (self.exponent - 1.0),)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        ga = unbroadcast(np.matmul(grad, np.swapaxes(self.b, -1, -2)), self.a.shape) if self.needs_grad(0) else None
        gb = unbroadcast(np.matmul(np.swapaxes(self.a, -1, -2), grad), self.b.shape) if self.needs_grad(1) else None
        return ga, gb


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Max(Function):
    def forward(self, x, axis: int, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        self.index = np.expand_dims(np.argmax(x, axis=axis), axis)
        return np.max(x, axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        out = np.zeros(self.shape, dtype=grad.dtype)
        np.put_along_axis(out, self.index, grad, axis=self.axis)
        return (out,)


class Reshape(Function):
    def forward(self, x, shape):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes):
        self.inverse = tuple(np.argsort(axes))
        return np.transpose(x, axes)

    def backward(self, grad):
        return (np.transpose(grad, self.inverse),)


class GetItem(Function):
    def forward(self, x, index):
        self.shape, self.dtype, self.index = x.shape, x.dtype, index
        return x[index]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=self.dtype)
        np.add.at(out, self.index, grad)
        return (out,)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Sqrt(Function):
    """Square root whose derivative uses ``max(x, grad_floor)`` so it stays finite at 0."""

    def forward(self, x, grad_floor: float = 0.0):
        self.out = np.sqrt(x)
        self.grad_floor = grad_floor
        return self.out

    def backward(self, grad):
        denom = np.sqrt(np.maximum(self.out * self.out, self.grad_floor)) if self.grad_floor > 0 else self.out
        return (grad * 0.5 / denom,)


class Where(Function):
    def forward(self, x, y, condition):
        self.condition = condition
        self.shapes = (x.shape, y.shape)
        return np.where(condition, x, y)

    def backward(self, grad):
        zero = np.zeros((), dtype=grad.dtype)
        return (unbroadcast(np.where(self.condition, grad, zero), self.shapes[0]),
                unbroadcast(np.where(self.condition, zero, grad), self.shapes[1]))


class Concatenate(Function):
    def forward(self, *arrays, axis: int = 0):
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


def where(condition: np.ndarray, x: ArrayLike, y: ArrayLike) -> Tensor:
    """Select ``x`` where ``condition`` holds, else ``y`` (condition is constant)."""
    like = x if isinstance(x, Tensor) else y
    dtype = like.dtype if isinstance(like, Tensor) else None
    return Where.apply(as_tensor(x, dtype), as_tensor(y, dtype), condition=np.asarray(condition, dtype=bool))


def concatenate(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    """Join tensors along an existing axis."""
    return Concatenate.apply(*tensors, axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along a new axis."""
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        shape = list(t.shape)
        position = axis if axis >= 0 else len(shape) + axis + 1
        shape.insert(position, 1)
        expanded.append(t.reshape(tuple(shape)))
    return concatenate(expanded, axis=axis)
