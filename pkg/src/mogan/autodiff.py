"""Reverse-mode differentiation on a recorded tape of array operations.

Every forward pass appends nodes (value + parent links + a vector-
Jacobian product) to a Tape; Tape.backward walks the record once in
reverse, which for recurrent stacks is exactly backpropagation through
time.  The op vocabulary is the small fixed set this project needs --
this is not a general autodiff system.

Values are float64 numpy arrays throughout.  Leading axes are batch
axes: ops either act elementwise (with broadcasting), reduce over
trailing feature axes, or matrix-multiply on the last two axes, so per-
row gradients of row-independent computations stay independent.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Node:
    __slots__ = ("tape", "value", "parents", "vjp", "grad", "needs_grad")

    def __init__(self, tape, value, parents=(), vjp=None, needs_grad=False):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad = None
        self.needs_grad = needs_grad

    @property
    def shape(self):
        return self.value.shape

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

    def __getitem__(self, key):
        return take(self, key)


class Tape:
    """Ordered op record; one forward pass per tape."""

    def __init__(self):
        self.nodes: list[Node] = []

    def record(self, value, parents, vjp) -> Node:
        needs = any(p.needs_grad for p in parents)
        node = Node(self, np.asarray(value, dtype=np.float64), parents,
                    vjp if needs else None, needs)
        self.nodes.append(node)
        return node

    def leaf(self, value, needs_grad=True) -> Node:
        node = Node(self, np.asarray(value, dtype=np.float64),
                    needs_grad=needs_grad)
        self.nodes.append(node)
        return node

    def constant(self, value) -> Node:
        return self.leaf(value, needs_grad=False)

    def backward(self, loss: Node) -> None:
        """Accumulate d loss / d node into .grad for contributing nodes."""
        if loss.value.shape != ():
            raise ValueError("backward needs a scalar loss")
        loss.grad = np.asarray(1.0)
        for node in reversed(self.nodes):
            if node.grad is None or node.vjp is None:
                continue
            for parent, g in zip(node.parents, node.vjp(node.grad)):
                if g is None or not parent.needs_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def _wrap(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.constant(np.asarray(x, dtype=np.float64))


def _pair(a, b) -> tuple[Node, Node]:
    tape = a.tape if isinstance(a, Node) else b.tape
    return _wrap(tape, a), _wrap(tape, b)


def add(a, b) -> Node:
    a, b = _pair(a, b)
    return a.tape.record(a.value + b.value, (a, b),
                         lambda g: (_unbroadcast(g, a.value.shape),
                                    _unbroadcast(g, b.value.shape)))


def sub(a, b) -> Node:
    a, b = _pair(a, b)
    return a.tape.record(a.value - b.value, (a, b),
                         lambda g: (_unbroadcast(g, a.value.shape),
                                    _unbroadcast(-g, b.value.shape)))


def mul(a, b) -> Node:
    a, b = _pair(a, b)
    return a.tape.record(a.value * b.value, (a, b),
                         lambda g: (_unbroadcast(g * b.value, a.value.shape),
                                    _unbroadcast(g * a.value, b.value.shape)))


def div(a, b) -> Node:
    a, b = _pair(a, b)
    return a.tape.record(a.value / b.value, (a, b),
                         lambda g: (_unbroadcast(g / b.value, a.value.shape),
                                    _unbroadcast(-g * a.value / (b.value * b.value),
                                                 b.value.shape)))


def matmul(a, b) -> Node:
    """a (..., n) or (B, n) @ b (n, m); vectors promote to one row."""
    a, b = _pair(a, b)
    av = a.value

    def vjp(g):
        ga = g @ b.value.T
        if av.ndim == 1:
            gb = np.outer(av, g)
        else:
            gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return a.tape.record(av @ b.value, (a, b), vjp)


def affine(x, w, b) -> Node:
    """Fused x @ w + b (bias broadcasts over leading axes)."""
    x, w = _pair(x, w)
    b = _wrap(x.tape, b)
    xv = x.value

    def vjp(g):
        gx = g @ w.value.T
        if xv.ndim == 1:
            gw = np.outer(xv, g)
        else:
            gw = xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return gx, gw, _unbroadcast(g, b.value.shape)

    return x.tape.record(xv @ w.value + b.value, (x, w, b), vjp)


def bmm(a, b) -> Node:
    """Batched matmul on trailing (i, j) @ (j, k) axes."""
    a, b = _pair(a, b)

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.value.shape)
        gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.value.shape)
        return ga, gb

    return a.tape.record(a.value @ b.value, (a, b), vjp)


def _elementwise(x: Node, value: np.ndarray, dvalue: np.ndarray) -> Node:
    return x.tape.record(value, (x,), lambda g: (g * dvalue,))


def sigmoid(x: Node) -> Node:
    with np.errstate(over="ignore"):    # exp overflow saturates correctly
        v = 1.0 / (1.0 + np.exp(-x.value))
    return _elementwise(x, v, v * (1.0 - v))


def tanh(x: Node) -> Node:
    v = np.tanh(x.value)
    return _elementwise(x, v, 1.0 - v * v)


def relu(x: Node) -> Node:
    return _elementwise(x, np.maximum(x.value, 0.0), (x.value > 0).astype(np.float64))


def exp(x: Node) -> Node:
    v = np.exp(x.value)
    return _elementwise(x, v, v)


def log(x: Node) -> Node:
    return _elementwise(x, np.log(x.value), 1.0 / x.value)


def sqrt(x: Node) -> Node:
    v = np.sqrt(x.value)
    return _elementwise(x, v, 0.5 / v)


def sin(x: Node) -> Node:
    return _elementwise(x, np.sin(x.value), np.cos(x.value))


def cos(x: Node) -> Node:
    return _elementwise(x, np.cos(x.value), -np.sin(x.value))


def square(x: Node) -> Node:
    return _elementwise(x, x.value * x.value, 2.0 * x.value)


def wrap_angle(x: Node) -> Node:
    """Wrap into (-pi, pi]; unit derivative away from the seam."""
    v = np.pi - np.mod(np.pi - x.value, 2.0 * np.pi)
    return _elementwise(x, v, np.ones_like(x.value))


def asum(x: Node, axis=None, keepdims=False) -> Node:
    shape = x.value.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shape).copy(),)

    return x.tape.record(x.value.sum(axis=axis, keepdims=keepdims), (x,), vjp)


def amean(x: Node, axis=None, keepdims=False) -> Node:
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(asum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def _is_basic_index(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis
               for p in parts)


def take(x: Node, key) -> Node:
    if _is_basic_index(key):
        def vjp(g):
            out = np.zeros(x.value.shape)
            out[key] = g
            return (out,)
    else:  # fancy indexing may repeat source elements
        def vjp(g):
            out = np.zeros(x.value.shape)
            np.add.at(out, key, g)
            return (out,)

    return x.tape.record(x.value[key], (x,), vjp)


def reshape(x: Node, shape) -> Node:
    old = x.value.shape
    return x.tape.record(x.value.reshape(shape), (x,),
                         lambda g: (g.reshape(old),))


def concat(nodes: list[Node], axis: int = -1) -> Node:
    tape = nodes[0].tape
    nodes = [_wrap(tape, n) for n in nodes]
    sizes = [n.value.shape[axis] for n in nodes]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return tape.record(np.concatenate([n.value for n in nodes], axis=axis),
                       tuple(nodes), vjp)


def stack_last(nodes: list[Node]) -> Node:
    """Stack equal-shape nodes along a new trailing axis."""
    tape = nodes[0].tape
    nodes = [_wrap(tape, n) for n in nodes]

    def vjp(g):
        return tuple(g[..., i] for i in range(len(nodes)))

    return tape.record(np.stack([n.value for n in nodes], axis=-1),
                       tuple(nodes), vjp)


def logsumexp(x: Node, axis: int = -1, keepdims: bool = False) -> Node:
    m = x.value.max(axis=axis, keepdims=True)
    e = np.exp(x.value - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = e / s

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (gg * soft,)

    return x.tape.record(out if keepdims else np.squeeze(out, axis=axis), (x,), vjp)


def softmax(x: Node, axis: int = -1) -> Node:
    return exp(sub(x, logsumexp(x, axis=axis, keepdims=True)))
