"""Dense float64 tensors with tape-based reverse-mode differentiation.

A ``Tape`` records every primitive operation that touches a differentiable
tensor, in execution order. ``backward`` replays the records in reverse,
accumulating vector-Jacobian products into per-tensor gradient buffers.
Only the handful of primitives needed by small fully connected networks is
provided; there is no broadcasting beyond numpy's elementwise rules and no
device support.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from ..errors import ContractError, DimensionError

_TAPE_STACK: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A float64 array plus a flag marking it as a gradient target."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis: int | None = None):
        return tensor_sum(self, axis)

    def mean(self):
        return tensor_mean(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Tape:
    """Execution-ordered record of primitive ops, used as a context manager."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        if popped is not self:
            raise RuntimeError("tape stack corrupted")

    def record(self, out: Tensor, parents: tuple[Tensor, ...], pull: Callable) -> None:
        self.nodes.append((out, parents, pull))


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to tensors on ``tape``.

    Returns a map from ``id(tensor)`` to its gradient array. Every tensor in
    ``params`` gets an entry; parameters the loss never touched get zeros.
    Use ``grad_of`` to read the map.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, parents, pull in reversed(tape.nodes):
        out_grad = grads.get(id(out))
        if out_grad is None:
            continue
        for parent, parent_grad in zip(parents, pull(out_grad)):
            if parent_grad is None:
                continue
            slot = grads.get(id(parent))
            if slot is None:
                # Pulls may hand back the incoming gradient unchanged; copy
                # before storing so in-place accumulation cannot alias it.
                if np.may_share_memory(parent_grad, out_grad):
                    parent_grad = parent_grad.copy()
                grads[id(parent)] = parent_grad
            else:
                slot += parent_grad
    if params is not None:
        for p in params:
            grads.setdefault(id(p), np.zeros_like(p.data))
    return grads


def grad_of(grads: dict[int, np.ndarray], param: Tensor) -> np.ndarray:
    return grads.get(id(param), np.zeros_like(param.data))


def _record(out: Tensor, parents: tuple[Tensor, ...], pull: Callable) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, pull)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- primitives -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def pull(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), pull)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)

    def pull(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(out, (a, b), pull)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def pull(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _record(out, (a, b), pull)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data)

    def pull(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _record(out, (a, b), pull)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def pull(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), pull)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    k = float(exponent)
    out = Tensor(a.data**k)

    def pull(g):
        return (g * k * a.data ** (k - 1.0),)

    return _record(out, (a,), pull)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.data))

    def pull(g):
        return (g * out.data,)

    return _record(out, (a,), pull)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data))

    def pull(g):
        return (g / a.data,)

    return _record(out, (a,), pull)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.tanh(a.data))

    def pull(g):
        return (g * (1.0 - out.data * out.data),)

    return _record(out, (a,), pull)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))

    def pull(g):
        return (g * (a.data > 0.0),)

    return _record(out, (a,), pull)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(np.minimum(a.data, b.data))

    def pull(g):
        take_a = a.data <= b.data
        return _unbroadcast(g * take_a, a.data.shape), _unbroadcast(g * ~take_a, b.data.shape)

    return _record(out, (a, b), pull)


def clip(a, low: float, high: float) -> Tensor:
    """Clamp to [low, high]; gradient passes only inside the closed interval."""
    a = as_tensor(a)
    out = Tensor(np.clip(a.data, low, high))

    def pull(g):
        return (g * ((a.data >= low) & (a.data <= high)),)

    return _record(out, (a,), pull)


def tensor_sum(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis))

    def pull(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        expanded = np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, a.data.shape).copy(),)

    return _record(out, (a,), pull)


def tensor_mean(a) -> Tensor:
    a = as_tensor(a)
    count = a.data.size
    out = Tensor(a.data.mean())

    def pull(g):
        return (np.broadcast_to(g / count, a.data.shape).copy(),)

    return _record(out, (a,), pull)
