"""Tape-based reverse-mode differentiation over a fixed set of array operations.

Operations record themselves on the active :class:`Tape` (entered with a
``with`` block) whenever one of their inputs requires a gradient. Outside a
tape they just compute values, which is what evaluation passes use.

Edge-valued quantities (weights stored on a sparse support) are 1-D tensors
of length ``support.nnz`` aligned with the CSR entry order.
"""
from __future__ import annotations

import contextvars
from typing import Callable, Sequence

import numpy as np

from .sparse import SparseMatrix

LOG_EPS = 1e-12

_active_tape: contextvars.ContextVar[Tape | None] = contextvars.ContextVar("tape", default=None)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str = ""):
        self.value = np.asarray(value)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def item(self) -> float:
        return float(self.value.item())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of executed operations; replayed backwards once per `backward` call."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._token = None

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        self._token = None

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], adjoint: Callable) -> None:
        self.records.append((out, inputs, adjoint))

    def backward(self, loss: Tensor) -> None:
        """Populate `.grad` of every tensor reachable from the scalar `loss`."""
        if loss.value.size != 1:
            raise ValueError("backward needs a scalar loss")
        for out, inputs, _ in self.records:
            out.grad = None
            for t in inputs:
                t.grad = None
        loss.grad = np.ones_like(loss.value)
        for out, inputs, adjoint in reversed(self.records):
            if out.grad is None:
                continue
            grads = adjoint(out.grad)
            for t, g in zip(inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(g, dtype=t.value.dtype)
                else:
                    t.grad += g


def _make(value, inputs: Sequence[Tensor], adjoint: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    tape = _active_tape.get()
    if needs and tape is not None:
        tape.record(out, tuple(inputs), adjoint)
    return out


# dense elementwise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _make(a.value + b.value, (a, b), lambda g: (g, g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return _make(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(c * a.value, (a,), lambda g: (c * g,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0).astype(a.dtype), (a,), lambda g: (g * mask,))


def softplus(a) -> Tensor:
    """log(1 + exp(x)), evaluated without overflow."""
    a = as_tensor(a)
    x = a.value
    out = np.logaddexp(0.0, x).astype(x.dtype)
    sig = np.exp(-np.logaddexp(0.0, -x)).astype(x.dtype)
    return _make(out, (a,), lambda g: (g * sig,))


def row_softmax(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    e = np.exp(x - x.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)

    def adjoint(g):
        return (p * (g - np.sum(g * p, axis=1, keepdims=True)),)

    return _make(p, (a,), adjoint)


def gather(a, index: np.ndarray) -> Tensor:
    """out[i] = a[index[i]] along the first axis."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def adjoint(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return (out,)

    return _make(a.value[index], (a,), adjoint)


# dense products --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def adjoint(g):
        ga = g @ b.value.T if a.requires_grad else None
        gb = a.value.T @ g if b.requires_grad else None
        return ga, gb

    return _make(a.value @ b.value, (a, b), adjoint)


# sparse support operations ----------------------------------------------------

def spmm(support: SparseMatrix, values, x) -> Tensor:
    """(support with entry values `values`) @ x. `values=None` uses the stored data."""
    x = as_tensor(x)
    vals = Tensor(support.data.astype(x.dtype)) if values is None else as_tensor(values)
    if vals.shape != (support.nnz,):
        raise ValueError(f"spmm: expected {support.nnz} edge values, got {vals.shape}")
    out = support.matmul(x.value, vals.value)

    def adjoint(g):
        gv = support.edge_dot(g, x.value) if vals.requires_grad else None
        gx = support.rmatmul_t(g, vals.value) if x.requires_grad else None
        return gv, gx

    return _make(out, (vals, x), adjoint)


def edge_dot(support: SparseMatrix, a) -> Tensor:
    """Edge values <a[i], a[j]> for every stored (i, j) of the support."""
    a = as_tensor(a)
    out = support.edge_dot(a.value, a.value)

    def adjoint(g):
        return (support.matmul(a.value, g) + support.rmatmul_t(a.value, g),)

    return _make(out, (a,), adjoint)


def row_sum(support: SparseMatrix, values) -> Tensor:
    """Per-row totals of edge values (length = number of rows)."""
    values = as_tensor(values)
    rows = support.row_ids()
    out = np.bincount(rows, weights=values.value, minlength=support.shape[0]).astype(values.dtype)
    return _make(out, (values,), lambda g: (g[rows],))


def row_divide(support: SparseMatrix, values, totals) -> Tensor:
    """values[e] / totals[row(e)], defined as 0 where the row total is 0."""
    values, totals = as_tensor(values), as_tensor(totals)
    rows = support.row_ids()
    denom = totals.value[rows]
    nonzero = denom != 0
    inv = np.zeros_like(denom)
    inv[nonzero] = 1.0 / denom[nonzero]
    out = values.value * inv

    def adjoint(g):
        gv = g * inv
        gt = np.bincount(rows, weights=-g * out * inv, minlength=support.shape[0])
        return gv, gt.astype(totals.dtype)

    return _make(out, (values, totals), adjoint)


# loss ------------------------------------------------------------------------

def masked_cross_entropy(predictions, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean of -log(p[a, y_a] + 1e-12) over the node ids in `mask`."""
    predictions = as_tensor(predictions)
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("masked_cross_entropy: empty mask")
    picked = predictions.value[mask, labels[mask]]
    out = np.asarray(-np.mean(np.log(picked + LOG_EPS)), dtype=predictions.dtype)

    def adjoint(g):
        grad = np.zeros_like(predictions.value)
        np.add.at(grad, (mask, labels[mask]), -g / (mask.size * (picked + LOG_EPS)))
        return (grad,)

    return _make(out, (predictions,), adjoint)
