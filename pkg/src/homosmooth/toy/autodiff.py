"""Minimal reverse-mode differentiation over a closed set of array ops."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents: Sequence["Tensor"] = (),
                 backward_fn: Optional[Callable[[np.ndarray], None]] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def constant(value) -> Tensor:
    return Tensor(value)


def backward(root: Tensor, seed: Optional[np.ndarray] = None) -> None:
    """Propagate gradients from ``root`` to every ancestor."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.accumulate(np.ones_like(root.value) if seed is None else seed)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value + b.value, (a, b))

    def bw(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))
    out.backward_fn = bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` with ``a`` of shape ``(..., n)`` and ``b`` of shape ``(n, m)``."""
    out = Tensor(a.value @ b.value, (a, b))

    def bw(g):
        a.accumulate(g @ b.value.T)
        n, m = b.shape
        b.accumulate(a.value.reshape(-1, n).T @ g.reshape(-1, m))
    out.backward_fn = bw
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    out = Tensor(y, (a,))
    out.backward_fn = lambda g: a.accumulate(g * (1.0 - y * y))
    return out


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = Tensor(a.value.reshape(shape), (a,))
    out.backward_fn = lambda g: a.accumulate(g.reshape(a.shape))
    return out


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    out = Tensor(np.concatenate([x.value for x in xs], axis=axis), tuple(xs))
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        for x, part in zip(xs, np.split(g, sizes, axis=axis)):
            x.accumulate(part)
    out.backward_fn = bw
    return out


def stack(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    out = Tensor(np.stack([x.value for x in xs], axis=axis), tuple(xs))

    def bw(g):
        for i, x in enumerate(xs):
            x.accumulate(np.take(g, i, axis=axis))
    out.backward_fn = bw
    return out


def embed(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.value[ids], (table,))

    def bw(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids, g)
        table.accumulate(full)
    out.backward_fn = bw
    return out


def masked_softmax(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis; entries where ``mask`` is False get weight 0."""
    z = x.value
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, (x,))

    def bw(g):
        x.accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))
    out.backward_fn = bw
    return out


def weighted_sum(weights: Tensor, states: Tensor) -> Tensor:
    """``(B, T)`` weights times ``(B, T, H)`` states summed over ``T``."""
    out = Tensor(np.einsum("bt,bth->bh", weights.value, states.value), (weights, states))

    def bw(g):
        weights.accumulate(np.einsum("bh,bth->bt", g, states.value))
        states.accumulate(weights.value[:, :, None] * g[:, None, :])
    out.backward_fn = bw
    return out


def smoothed_nll(logits: Tensor, targets: np.ndarray, offsets: np.ndarray,
                 weights: np.ndarray) -> Tensor:
    """Scalar ``sum_b w_b * (CE(targets_b, softmax(logits_b)) - offsets_b)``.

    With ``targets`` the mixed one-hot/prior distribution and ``offsets`` the
    matching ``beta * H(prior)`` this is the label-smoothing loss summed over
    rows; its gradient is ``w_b * (softmax - targets)``.
    """
    z = logits.value
    m = z.max(axis=-1, keepdims=True)
    logp = z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    per_row = -(targets * logp).sum(axis=-1) - offsets
    out = Tensor(np.dot(weights, per_row), (logits,))
    p = np.exp(logp)

    def bw(g):
        logits.accumulate(g * weights[:, None] * (p - targets))
    out.backward_fn = bw
    return out


def total(xs: Sequence[Tensor]) -> Tensor:
    out = Tensor(sum(x.value for x in xs), tuple(xs))

    def bw(g):
        for x in xs:
            x.accumulate(g)
    out.backward_fn = bw
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.value * c, (a,))
    out.backward_fn = lambda g: a.accumulate(g * c)
    return out
