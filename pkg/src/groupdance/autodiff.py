"""Reverse-mode autodiff over numpy arrays.

Small tape-based engine, float64 throughout. Ops build a graph only while
gradients are enabled and some input requires them; `backward(loss)` walks
the tape once in reverse topological order. This is deliberately minimal:
just the ops the models and losses need, each with a hand-written backward.
"""

from __future__ import annotations

import numpy as np

_grad_enabled = True


class no_grad:
    """Context manager disabling graph construction (rollouts, eval)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_grad_borrowed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._grad_borrowed = False

    # -- graph plumbing ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def __pow__(self, k):
        return power(self, k)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, backward_fn) -> Tensor:
    """Create a graph node; collapses to a constant when grads are off."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward_fn
        out.requires_grad = True
    return out


def _accum(t: Tensor, g: np.ndarray):
    # first contribution borrows the buffer; a second one copies before
    # mutating so shared gradient arrays are never written through
    if t.grad is None:
        if g.shape != t.data.shape:
            g = np.broadcast_to(g, t.data.shape)
        t.grad = g
        t._grad_borrowed = True
    elif t._grad_borrowed:
        t.grad = t.grad + g
        t._grad_borrowed = False
    else:
        t.grad += g


def backward(loss: Tensor, grad=None):
    """Accumulate d(loss)/d(leaf) into .grad of every reachable leaf."""
    topo, seen, stack = [], set(), [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data) if grad is None else np.asarray(grad, dtype=np.float64)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- primitive ops -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = make_node(a.data + b.data, (a, b), None)
    if out._backward is None and out._parents:
        def bwd(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))
        out._backward = bwd
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = make_node(a.data * b.data, (a, b), None)
    if out._parents:
        def bwd(g):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))
        out._backward = bwd
    return out


def power(a, k: float) -> Tensor:
    a = as_tensor(a)
    out = make_node(a.data ** k, (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, g * k * a.data ** (k - 1.0))
        out._backward = bwd
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    # promote vectors so the backward only ever sees >= 2-D operands
    a_vec, b_vec = a.ndim == 1, b.ndim == 1
    if a_vec:
        a = reshape(a, (1, a.shape[0]))
    if b_vec:
        b = reshape(b, (b.shape[0], 1))
    if b.ndim == 2 and a.ndim > 2:
        # x @ W with batched x: one flat GEMM beats a batched-matmul loop,
        # forward and backward both
        lead = a.shape[:-1]
        out = reshape(matmul(reshape(a, (-1, a.shape[-1])), b), lead + (b.shape[1],))
    else:
        out = make_node(np.matmul(a.data, b.data), (a, b), None)
        if out._parents:
            def bwd(g):
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                _accum(a, _unbroadcast(ga, a.data.shape))
                _accum(b, _unbroadcast(gb, b.data.shape))
            out._backward = bwd
    if a_vec and b_vec:
        return reshape(out, ())
    if a_vec:
        return reshape(out, out.shape[:-2] + (out.shape[-1],))
    if b_vec:
        return reshape(out, out.shape[:-1])
    return out


def take(a, idx) -> Tensor:
    a = as_tensor(a)
    out = make_node(a.data[idx], (a,), None)
    if out._parents:
        def bwd(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accum(a, full)
        out._backward = bwd
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = make_node(a.data.reshape(shape), (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, g.reshape(a.data.shape))
        out._backward = bwd
    return out


def swapaxes(a, ax1, ax2) -> Tensor:
    a = as_tensor(a)
    out = make_node(np.swapaxes(a.data, ax1, ax2), (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, np.swapaxes(g, ax1, ax2))
        out._backward = bwd
    return out


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    out = make_node(np.broadcast_to(a.data, shape).copy(), (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, _unbroadcast(g, a.data.shape))
        out._backward = bwd
    return out


def concatenate(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = make_node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), None)
    if out._parents:
        sizes = [p.data.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]
        def bwd(g):
            for p, gp in zip(parts, np.split(g, splits, axis=axis)):
                _accum(p, gp)
        out._backward = bwd
    return out


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = make_node(a.data.sum(axis=axis, keepdims=keepdims), (a,), None)
    if out._parents:
        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        out._backward = bwd
    return out


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(tsum(a, axis, keepdims), 1.0 / float(n))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    out = make_node(np.abs(a.data), (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, g * np.sign(a.data))
        out._backward = bwd
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    out = make_node(y, (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, g * y)
        out._backward = bwd
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = make_node(np.log(a.data), (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, g / a.data)
        out._backward = bwd
    return out


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)
    out = make_node(y, (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, g * 0.5 / y)
        out._backward = bwd
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = make_node(np.maximum(a.data, 0.0), (a,), None)
    if out._parents:
        mask = a.data > 0.0
        def bwd(g):
            _accum(a, g * mask)
        out._backward = bwd
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = make_node(y, (a,), None)
    if out._parents:
        def bwd(g):
            _accum(a, g * y * (1.0 - y))
        out._backward = bwd
    return out


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp with straight-through gradient inside [lo, hi], zero outside."""
    a = as_tensor(a)
    out = make_node(np.clip(a.data, lo, hi), (a,), None)
    if out._parents:
        mask = (a.data >= lo) & (a.data <= hi)
        def bwd(g):
            _accum(a, g * mask)
        out._backward = bwd
    return out


def log_softmax(a, axis=-1) -> Tensor:
    """Numerically stable log-softmax (max shift detached)."""
    a = as_tensor(a)
    shift = Tensor(a.data.max(axis=axis, keepdims=True))
    z = a - shift
    return z - log(tsum(exp(z), axis=axis, keepdims=True))


def softplus(a) -> Tensor:
    """log(1 + e^x), overflow-safe; gradient is sigmoid(x)."""
    a = as_tensor(a)
    y = np.logaddexp(0.0, a.data)
    out = make_node(y, (a,), None)
    if out._parents:
        sig = 1.0 / (1.0 + np.exp(-a.data))
        def bwd(g):
            _accum(a, g * sig)
        out._backward = bwd
    return out


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Fused normalization over the last axis: gamma * x_hat + beta."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = make_node(xhat * gamma.data + beta.data, (x, gamma, beta), None)
    if out._parents:
        def bwd(g):
            sum_axes = tuple(range(g.ndim - 1))
            _accum(beta, g.sum(axis=sum_axes))
            _accum(gamma, (g * xhat).sum(axis=sum_axes))
            gx = g * gamma.data
            term = gx - gx.mean(axis=-1, keepdims=True) \
                - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            _accum(x, term * inv)
        out._backward = bwd
    return out
