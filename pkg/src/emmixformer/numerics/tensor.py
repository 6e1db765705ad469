"""Reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tensor` wraps an ``ndarray`` and remembers the closure that
propagates gradients to its parents.  Calling :meth:`Tensor.backward` on a
scalar walks the graph in reverse topological order.
"""
from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = contextvars.ContextVar("grad_enabled", default=True)
_KINK_MARGIN = contextvars.ContextVar("kink_margin", default=None)


class NumericalError(FloatingPointError):
    """A primitive produced a non-finite value from finite inputs."""


class ShapeError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """N-dimensional double-precision array with gradient tracking.

    Gradients are accumulated into ``grad`` for leaf tensors (and for
    intermediate tensors on which :meth:`retain_grad` was called).
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_retain", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._retain = False
        self.name = name

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{rg})"

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def retain_grad(self) -> Tensor:
        self._retain = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    # ------------------------------------------------------------ graph glue
    @staticmethod
    def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
        if not np.all(np.isfinite(data)):
            raise NumericalError("non-finite value produced by a primitive operation")
        out = Tensor(data)
        if _GRAD_ENABLED.get() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``requires_grad`` leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _toposort(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None or node._retain:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # ------------------------------------------------------------ arithmetic
    def __add__(self, other) -> Tensor:
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data + other.data,
            (self, other),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __sub__(self, other) -> Tensor:
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data - other.data,
            (self, other),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other) -> Tensor:
        return as_tensor(other) - self

    def __mul__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(
            a * b,
            (self, other),
            lambda g: (unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self.data, other.data
        out = a / b
        return Tensor._make(
            out,
            (self, other),
            lambda g: (unbroadcast(g / b, a.shape), unbroadcast(-g * out / b, b.shape)),
        )

    def __rtruediv__(self, other) -> Tensor:
        return as_tensor(other) / self

    def __neg__(self) -> Tensor:
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, p: float) -> Tensor:
        a = self.data
        return Tensor._make(a**p, (self,), lambda g: (g * p * a ** (p - 1),))

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, idx) -> Tensor:
        shape = self.shape

        basic = all(isinstance(i, (int, slice)) or i is None or i is Ellipsis
                    for i in (idx if isinstance(idx, tuple) else (idx,)))

        def back(g):
            full = np.zeros(shape)
            if basic:
                full[idx] += g
            else:
                np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(self.data[idx], (self,), back)

    # ------------------------------------------------------------ reductions
    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ------------------------------------------------------------ movement
    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def transpose(self, *axes) -> Tensor:
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        return Tensor._make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    def swapaxes(self, a: int, b: int) -> Tensor:
        return Tensor._make(np.swapaxes(self.data, a, b), (self,), lambda g: (np.swapaxes(g, a, b),))

    @property
    def T(self) -> Tensor:
        return self.swapaxes(-1, -2)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root: Tensor) -> list[Tensor]:
    # iterative DFS; recurrent graphs are too deep for recursion
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


# ---------------------------------------------------------------- primitives
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batching rules on leading axes.

    A 1-D left operand is treated as a row vector and a 1-D right operand
    as a column vector; the promoted axis is dropped from the result.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if a.ndim == 1:
        return matmul(a.reshape(1, -1), b).reshape(*b.shape[:-2], b.shape[-1]) if b.ndim > 1 \
            else (a * b).sum()
    if b.ndim == 1:
        return matmul(a, b.reshape(-1, 1)).reshape(a.shape[:-1])
    x, y = a.data, b.data
    if y.ndim == 2 and x.ndim > 2:
        # fold leading axes into one GEMM; the weight gradient is then a single product
        lead = x.shape[:-1]
        x2 = x.reshape(-1, x.shape[-1])

        def back_flat(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ y.T).reshape(x.shape) if a.requires_grad else None
            gb = x2.T @ g2 if b.requires_grad else None
            return ga, gb

        return Tensor._make((x2 @ y).reshape(*lead, y.shape[-1]), (a, b), back_flat)

    def back(g):
        ga = unbroadcast(g @ np.swapaxes(y, -1, -2), x.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(x, -1, -2) @ g, y.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(x @ y, (a, b), back)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow is reported as NumericalError
        out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.data
    return Tensor._make(np.log(x), (a,), lambda g: (g / x,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    ez = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor._make(out, (a,), lambda g: (g * (1.0 - out * out),))


@contextlib.contextmanager
def kink_margin():
    """Record the smallest |input| seen by :func:`relu` inside the block.

    Finite differences are only meaningful away from the kink, so gradient
    checks use this to reject inputs that sit too close to it.
    """
    box = [np.inf]
    token = _KINK_MARGIN.set(box)
    try:
        yield box
    finally:
        _KINK_MARGIN.reset(token)


def relu(a: Tensor) -> Tensor:
    box = _KINK_MARGIN.get()
    if box is not None and a.data.size:
        box[0] = min(box[0], float(np.min(np.abs(a.data))))
    mask = a.data > 0
    return Tensor._make(a.data * mask, (a,), lambda g: (g * mask,))


def sqrt(a: Tensor) -> Tensor:
    """Square root; the derivative at 0 is taken to be 0."""
    out = np.sqrt(a.data)
    safe = np.where(out > 0, out, 1.0)
    return Tensor._make(out, (a,), lambda g: (np.where(out > 0, g * 0.5 / safe, 0.0),))


def sin(a: Tensor) -> Tensor:
    x = a.data
    return Tensor._make(np.sin(x), (a,), lambda g: (g * np.cos(x),))


def cos(a: Tensor) -> Tensor:
    x = a.data
    return Tensor._make(np.cos(x), (a,), lambda g: (-g * np.sin(x),))


def atan2(y: Tensor, x: Tensor) -> Tensor:
    """Four-quadrant arctangent in (-pi, pi]; gradient at the origin is 0.

    ``+0.0`` is added to ``y`` so that a signed zero imaginary part never
    maps to ``-pi``.
    """
    y, x = as_tensor(y), as_tensor(x)
    yv, xv = y.data + 0.0, x.data
    r2 = xv * xv + yv * yv
    safe = np.where(r2 > 0, r2, 1.0)

    def back(g):
        gy = np.where(r2 > 0, g * xv / safe, 0.0)
        gx = np.where(r2 > 0, -g * yv / safe, 0.0)
        return unbroadcast(gy, y.shape), unbroadcast(gx, x.shape)

    return Tensor._make(np.arctan2(yv, xv), (y, x), back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tensors, back)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def parameters_grad_norm(params: Iterable[Tensor]) -> float:
    return float(np.sqrt(sum(np.sum(p.grad**2) for p in params if p.grad is not None)))
