"""Reverse-mode automatic differentiation over numpy arrays.

A `Tensor` wraps a float64 ndarray and records the operations applied to
it; `Tensor.backward()` walks the recorded graph once, depth-first, and
accumulates gradients into every upstream tensor created with
``requires_grad=True``. The op set is deliberately small: arithmetic with
numpy broadcasting, batched matmul, same-padded conv2d (dispatched to the
kernels backend), reductions, a few pointwise nonlinearities, softmax and
logsumexp, slicing, and stop-gradient.

Everything is float64; graphs are rebuilt per call, never mutated.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from . import kernels


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if squeeze:
        grad = grad.sum(axis=squeeze, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    # -- introspection ---------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ---------------------------------------------------
    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad=None) -> None:
        if grad is None:
            grad = np.ones_like(self.data)
        self.grad = np.array(grad, dtype=np.float64)

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis, keepdims=False):
        return reduce_max(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Iterable[Tensor], backward) -> Tensor:
    parents = tuple(p for p in parents if p.requires_grad or p._parents)
    if not parents:
        return Tensor(data)
    out = Tensor(data)
    out.requires_grad = True
    out._parents = parents
    out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._parents):
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


# -- arithmetic -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(out, (a, b), bwd)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** p

    def bwd(g):
        _accum(a, g * p * a.data ** (p - 1))

    return _node(out, (a,), bwd)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data @ b.data

    def bwd(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _node(out, (a, b), bwd)


# -- shape ------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _node(out, (a,), bwd)


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    out = a.data.swapaxes(ax1, ax2)

    def bwd(g):
        _accum(a, g.swapaxes(ax1, ax2))

    return _node(out, (a,), bwd)


def take(a, idx) -> Tensor:
    """Indexing/slicing; gradients scatter-add back into place."""
    a = as_tensor(a)
    out = a.data[idx]

    def bwd(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accum(a, buf)

    return _node(out, (a,), bwd)


# -- reductions ---------------------------------------------------------------

def _restore_axes(g: np.ndarray, shape, axis, keepdims):
    if keepdims or axis is None:
        return g
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    for ax in sorted(axes):
        g = np.expand_dims(g, ax)
    return g


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        g = _restore_axes(np.asarray(g), a.data.shape, axis, keepdims)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _node(out, (a,), bwd)


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size / out.size

    def bwd(g):
        g = _restore_axes(np.asarray(g), a.data.shape, axis, keepdims)
        _accum(a, np.broadcast_to(g, a.data.shape) / n)

    return _node(out, (a,), bwd)


def reduce_max(a, axis: int, keepdims=False) -> Tensor:
    """Max along one axis; the gradient flows to the first argmax."""
    a = as_tensor(a)
    out = a.data.max(axis=axis, keepdims=keepdims)
    idx = np.argmax(a.data, axis=axis)
    onehot = np.zeros_like(a.data)
    np.put_along_axis(onehot, np.expand_dims(idx, axis), 1.0, axis=axis)

    def bwd(g):
        g = _restore_axes(np.asarray(g), a.data.shape, axis, keepdims)
        _accum(a, onehot * g)

    return _node(out, (a,), bwd)


# -- pointwise ---------------------------------------------------------------

def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def bwd(g):
        _accum(a, g * out)

    return _node(out, (a,), bwd)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def bwd(g):
        _accum(a, g / a.data)

    return _node(out, (a,), bwd)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def bwd(g):
        _accum(a, g * 0.5 / out)

    return _node(out, (a,), bwd)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - out * out))

    return _node(out, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        _accum(a, g * out * (1.0 - out))

    return _node(out, (a,), bwd)


def absolute(a) -> Tensor:
    a = as_tensor(a)
    out = np.abs(a.data)

    def bwd(g):
        _accum(a, g * np.sign(a.data))

    return _node(out, (a,), bwd)


def sign(a) -> Tensor:
    """Elementwise sign, treated as piecewise constant (zero gradient)."""
    a = as_tensor(a)
    return Tensor(np.sign(a.data))


def clip(a, lo=None, hi=None) -> Tensor:
    """Clamp; the gradient passes only where no bound is active."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = np.ones_like(a.data)
    if lo is not None:
        inside = inside * (a.data > lo)
    if hi is not None:
        inside = inside * (a.data < hi)

    def bwd(g):
        _accum(a, g * inside)

    return _node(out, (a,), bwd)


# -- composite ops -------------------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accum(a, out * (g - inner))

    return _node(out, (a,), bwd)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = e / s
    if not keepdims:
        out = out.squeeze(axis=axis)

    def bwd(g):
        g = _restore_axes(np.asarray(g), a.data.shape, axis, keepdims)
        _accum(a, soft * g)

    return _node(out, (a,), bwd)


def variance(a, axis, keepdims: bool = False) -> Tensor:
    """Population variance along `axis` (composed, differentiable)."""
    a = as_tensor(a)
    centered = a - a.mean(axis=axis, keepdims=True)
    return (centered * centered).mean(axis=axis, keepdims=keepdims)


def conv2d(x, w) -> Tensor:
    """Same-padded stride-1 correlation of B,C,H,W with O,C,kh,kw taps.

    Zero padding, split (k-1)//2 before / k//2 after, so output is B,O,H,W.
    Forward and both gradient passes run on the selected kernels backend.
    """
    x, w = as_tensor(x), as_tensor(w)
    kh, kw = w.data.shape[2], w.data.shape[3]
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    pb, pr = kh - 1 - pt, kw - 1 - pl
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    out = kernels.conv2d_forward(xp, w.data)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if w.requires_grad or w._parents:
            _accum(w, kernels.conv2d_grad_weights(xp, g))
        if x.requires_grad or x._parents:
            gxp = kernels.conv2d_grad_input(g, w.data)
            H, W = x.data.shape[2], x.data.shape[3]
            _accum(x, gxp[:, :, pt:pt + H, pl:pl + W])

    return _node(out, (x, w), bwd)
