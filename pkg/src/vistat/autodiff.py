"""A small reverse-mode automatic differentiation tape over numpy arrays.

``Tensor`` wraps an array and records how it was produced. Calling
:meth:`Tensor.backward` on a scalar walks the recorded graph in reverse
topological order and accumulates ``.grad`` on every tensor created with
``requires_grad=True``.

The module-level functions (``tanh``, ``concat`` ...) accept plain arrays as
well, so model code written against them runs unchanged with or without
the tape.
"""

from __future__ import annotations

import numpy as np

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805
LEAKY_SLOPE = 0.01


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    # keep numpy from trying to broadcast Tensors elementwise as objects
    __array_ufunc__ = None

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad=False, name=None, _parents=(), _backward=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward
        self.name = name

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    # -- array-like surface --------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    # -- graph construction --------------------------------------------------
    @staticmethod
    def _make(value, parents, backward):
        parents = tuple(parents)
        if not any(p.requires_grad for p in parents):
            return Tensor(value)
        return Tensor(value, _parents=parents, _backward=backward)

    def __add__(self, other):
        other = _lift(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.value + other.value,
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.value, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        other = _lift(other)
        a, b = self.value, other.value
        return Tensor._make(
            a * b,
            (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(self.value[idx], (self,), backward)

    def reshape(self, *shape):
        old = self.shape
        return Tensor._make(self.value.reshape(*shape), (self,), lambda g: (g.reshape(old),))

    def sum(self, axis=None):
        shape = self.shape

        def backward(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.value.sum(axis=axis), (self,), backward)

    def mean(self, axis=None):
        count = self.value.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / count)

    def square(self):
        x = self.value
        return Tensor._make(x * x, (self,), lambda g: (2.0 * x * g,))

    # -- reverse pass --------------------------------------------------------
    def backward(self, grad=None):
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        order = []
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
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        grads = {id(self): np.asarray(grad, dtype=float)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def matmul(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return np.matmul(a, b)
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value

    def backward(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return Tensor._make(av @ bv, (a, b), backward)


def _unary(x, fn, dfn):
    """Apply ``fn`` elementwise; ``dfn(x, y)`` gives dy/dx from input and output."""
    if not isinstance(x, Tensor):
        return fn(np.asarray(x, dtype=float))
    xv = x.value
    y = fn(xv)
    return Tensor._make(y, (x,), lambda g: (g * dfn(xv, y),))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _selu(x):
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def tanh(x):
    return _unary(x, np.tanh, lambda x, y: 1.0 - y * y)


def sigmoid(x):
    return _unary(x, _sigmoid, lambda x, y: y * (1.0 - y))


def relu(x):
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda x, y: (x > 0).astype(float))


def leaky_relu(x):
    return _unary(
        x,
        lambda v: np.where(v > 0, v, LEAKY_SLOPE * v),
        lambda x, y: np.where(x > 0, 1.0, LEAKY_SLOPE),
    )


def elu(x):
    return _unary(x, _elu, lambda x, y: np.where(x > 0, 1.0, y + 1.0))


def selu(x):
    return _unary(
        x,
        _selu,
        lambda x, y: np.where(x > 0, SELU_SCALE, y + SELU_SCALE * SELU_ALPHA),
    )


def identity(x):
    return x


ACTIVATIONS = {
    "relu": relu,
    "elu": elu,
    "selu": selu,
    "leaky-relu": leaky_relu,
    "identity": identity,
    "tanh": tanh,
}


def concat(xs, axis=-1):
    if not any(isinstance(x, Tensor) for x in xs):
        return np.concatenate(xs, axis=axis)
    ts = [_lift(x) for x in xs]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor._make(np.concatenate([t.value for t in ts], axis=axis), ts, backward)


def stack(xs, axis=0):
    if not any(isinstance(x, Tensor) for x in xs):
        return np.stack(xs, axis=axis)
    ts = [_lift(x) for x in xs]

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(np.stack([t.value for t in ts], axis=axis), ts, backward)


def square(x):
    return x.square() if isinstance(x, Tensor) else np.square(x)
