"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation records its parents and a closure that maps the
upstream gradient to one gradient per parent. ``Tensor.backward`` walks the
recorded graph in reverse topological order.

Leaves created with ``requires_grad=True`` own a gradient buffer that starts at
zero and is *accumulated into* by every backward pass; call ``zero_grad`` (or
:func:`zero_grad` on a list of tensors) to reset it.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation passes)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _frozen(array: np.ndarray) -> np.ndarray:
    # np.ascontiguousarray would promote 0-d arrays to shape (1,)
    array = np.asarray(array, dtype=np.float64, order="C")
    if array.flags.writeable:
        array.flags.writeable = False
    return array


class Tensor:
    """An n-dimensional float64 array with an optional gradient slot.

    The data array is read-only; operations always produce new tensors.
    Optimizers replace parameter values by assigning ``tensor.data``.
    """

    __slots__ = ("_data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data._data
        self._data = _frozen(np.array(data, dtype=np.float64))
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], tuple]] = None
        self.grad: Optional[np.ndarray] = (
            np.zeros(self._data.shape) if self.requires_grad else None
        )

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
        out = cls.__new__(cls)
        out._data = _frozen(data)
        out.name = None
        out.grad = None
        tracked = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        out._parents = tuple(parents) if tracked else ()
        out._backward = backward if tracked else None
        return out

    # -- array protocol ---------------------------------------------------

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._data.shape:
            raise ShapeError(f"cannot assign shape {value.shape} to tensor of shape {self.shape}")
        self._data = _frozen(value.copy())

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs exactly one element, tensor has shape {self.shape}")
        return float(self._data.reshape(()))

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self._data, precision=4)}{flag})"

    # -- gradients ----------------------------------------------------------

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros(self.shape)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``requires_grad`` leaf.

        Repeated calls without ``zero_grad`` add to the existing gradients.
        """
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones(self.shape)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # -- operators ----------------------------------------------------------

    def __add__(self, other) -> Tensor:
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> Tensor:
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other) -> Tensor:
        return add(neg(self), other)

    def __mul__(self, other) -> Tensor:
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    def sum(self) -> Tensor:
        return tsum(self)

    def mean(self) -> Tensor:
        return mean(self)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


# -- primitives ---------------------------------------------------------------


def elementwise_apply(x: Tensor, f: Callable, df: Callable) -> Tensor:
    """Apply ``f`` elementwise; backward multiplies the upstream gradient by ``df``.

    ``f`` and ``df`` are called on the whole data array. Scalar-only callables
    (e.g. ``math.exp``) are vectorized automatically.
    """
    x = as_tensor(x)

    def call(fn, arr):
        try:
            out = np.asarray(fn(arr), dtype=np.float64)
            if out.shape == arr.shape:
                return out
        except TypeError:
            pass
        return np.vectorize(fn, otypes=[np.float64])(arr)

    data = call(f, x.data) if x.size else np.empty(x.shape)

    def backward(g):
        return (g * call(df, x.data),) if x.size else (g,)

    return Tensor._from_op(data, (x,), backward)


def add(a, b) -> Tensor:
    """Elementwise sum. ``b`` may also be a scalar or a vector over the last axis of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g))
    if b.ndim == 0 or b.shape == a.shape[-1:]:
        lead = tuple(range(a.ndim - b.ndim))
        return Tensor._from_op(
            a.data + b.data, (a, b), lambda g: (g, g.sum(axis=lead) if lead else g)
        )
    if a.ndim == 0 or a.shape == b.shape[-1:]:
        return add(b, a)
    raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")


def neg(a: Tensor) -> Tensor:
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    """Elementwise product of equal shapes, or tensor times a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return Tensor._from_op(
            a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data)
        )
    if b.ndim == 0:
        return Tensor._from_op(
            a.data * b.data, (a, b), lambda g: (g * b.data, np.sum(g * a.data))
        )
    if a.ndim == 0:
        return mul(b, a)
    raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(a.data @ b.data, (a, b), backward)


def tsum(a: Tensor) -> Tensor:
    return Tensor._from_op(np.sum(a.data), (a,), lambda g: (np.full(a.shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    n = max(a.size, 1)
    return Tensor._from_op(
        np.mean(a.data) if a.size else np.float64(0.0),
        (a,),
        lambda g: (np.full(a.shape, float(g) / n),),
    )


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Reshape (the result never aliases writable memory, so it behaves as a copy)."""
    shape = tuple(int(s) for s in shape)
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from exc
    return Tensor._from_op(data, (a,), lambda g: (g.reshape(a.shape),))


def flatten(a: Tensor) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    return reshape(a, (a.shape[0], -1))


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise log-softmax of a [batch, classes] tensor."""
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def backward(g):
        soft = np.exp(out)
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return Tensor._from_op(out, (logits,), backward)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[true class]``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy expects [batch, classes] logits and [batch] labels, "
                         f"got {logits.shape} and {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ShapeError(f"labels must lie in [0, {logits.shape[1]})")
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def backward(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return (grad * (float(g) / n),)

    return Tensor._from_op(loss, (logits,), backward)
