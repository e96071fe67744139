"""Minimal reverse-mode autodiff over numpy arrays.

Just enough machinery to differentiate the denoiser MLP and its training
loss: matmul, broadcast add/sub/mul, SiLU, and axis sums.  A `Var` wraps
an ndarray and records its parents; `backward` walks the recorded tape
in reverse topological order and accumulates gradients into the leaves.

Values are plain numpy arrays, so the same forward code runs in float32
for training and float64 for gradient checks.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # Sum away leading axes that were added by broadcasting.
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # Sum over axes that were 1 in the original shape.
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """Node in the computation tape."""

    __slots__ = ("value", "grad", "_parents", "requires_grad")

    def __init__(self, value, parents=(), requires_grad=False):
        self.value = np.asarray(value)
        self.grad = None
        # parents: tuple of (Var, vjp) where vjp maps the output gradient
        # to this parent's gradient contribution.
        self._parents = tuple(parents)
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p, _ in self._parents
        )

    @property
    def shape(self):
        return self.value.shape

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _is_var(x) -> bool:
    return isinstance(x, Var)


def matmul(a, b):
    if not (_is_var(a) or _is_var(b)):
        return a @ b
    a, b = as_var(a), as_var(b)
    out = Var(
        a.value @ b.value,
        parents=(
            (a, lambda g, bv=b.value: g @ bv.T),
            (b, lambda g, av=a.value: av.T @ g),
        ),
    )
    return out


def add(a, b):
    if not (_is_var(a) or _is_var(b)):
        return a + b
    a, b = as_var(a), as_var(b)
    return Var(
        a.value + b.value,
        parents=(
            (a, lambda g, s=a.value.shape: _unbroadcast(g, s)),
            (b, lambda g, s=b.value.shape: _unbroadcast(g, s)),
        ),
    )


def sub(a, b):
    if not (_is_var(a) or _is_var(b)):
        return a - b
    a, b = as_var(a), as_var(b)
    return Var(
        a.value - b.value,
        parents=(
            (a, lambda g, s=a.value.shape: _unbroadcast(g, s)),
            (b, lambda g, s=b.value.shape: _unbroadcast(-g, s)),
        ),
    )


def mul(a, b):
    if not (_is_var(a) or _is_var(b)):
        return a * b
    a, b = as_var(a), as_var(b)
    return Var(
        a.value * b.value,
        parents=(
            (a, lambda g, bv=b.value, s=a.value.shape: _unbroadcast(g * bv, s)),
            (b, lambda g, av=a.value, s=b.value.shape: _unbroadcast(g * av, s)),
        ),
    )


def affine(x, w, b):
    """x @ w + b, with b broadcast over rows."""
    xc = x.value.shape[-1] if _is_var(x) else np.asarray(x).shape[-1]
    wr = w.value.shape[0] if _is_var(w) else np.asarray(w).shape[0]
    if xc != wr:
        raise ValueError(f"affine dimension mismatch: x has {xc} cols, w has {wr} rows")
    return add(matmul(x, w), b)


def _sigmoid(v):
    # exp(-|v|) <= 1 never overflows; both branches are algebraically sigmoid(v)
    e = np.exp(-np.abs(v))
    return np.where(np.asarray(v) >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def silu(x):
    """Sigmoid-weighted linear unit x * sigmoid(x)."""
    if not _is_var(x):
        return x * _sigmoid(x)
    s = _sigmoid(x.value)
    y = x.value * s
    # d/dx [x*s(x)] = s(x) * (1 + x * (1 - s(x)))
    local = s * (1.0 + x.value * (1.0 - s))
    return Var(y, parents=((x, lambda g, d=local: g * d),))


def vsum(x, axis=None):
    """Sum over `axis` (None = all elements)."""
    if not _is_var(x):
        return np.sum(x, axis=axis)
    shape = x.value.shape

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, shape).astype(x.value.dtype, copy=False)
        ge = np.expand_dims(g, axis)
        return np.broadcast_to(ge, shape).astype(x.value.dtype, copy=False)

    return Var(np.sum(x.value, axis=axis), parents=((x, vjp),))


def backward(out: Var, seed_grad=None) -> None:
    """Accumulate gradients of `out` into every reachable requires_grad leaf.

    `seed_grad` defaults to ones of the output shape.  Raises if `out`
    has no recorded computation behind it.
    """
    if not out._parents:
        raise ValueError("backward on an empty tape: output records no computation")

    topo: list[Var] = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    if seed_grad is None:
        seed_grad = np.ones_like(out.value)
    out.grad = np.asarray(seed_grad, dtype=out.value.dtype)

    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node._parents:
            if not parent.requires_grad:
                continue
            contrib = vjp(g)
            if parent.grad is None:
                parent.grad = contrib.copy() if contrib is g else contrib
            else:
                parent.grad = parent.grad + contrib
