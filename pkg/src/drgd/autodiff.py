"""Reverse-mode automatic differentiation over dense float64 arrays.

Forward values are computed eagerly. When a :class:`Tape` is active, every
operation that touches a tracked tensor appends a record to it, and
:meth:`Tape.backward` sweeps the records in reverse to fill in ``.grad``.

Tensors are usually 2-D (rows are batch examples), but the primitives follow
numpy broadcasting, so a few 3-D intermediates (batch x time x features) are
allowed where attention needs them.

A tape can be swept once. A second :meth:`Tape.backward` on the same tape
raises; call :meth:`Tape.clear` and run a new forward pass instead. Leaf
gradients accumulate additively across tapes until :func:`zero_grad`.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_local = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A node holding a value and, after backward, its gradient."""

    __slots__ = ("value", "grad", "requires_grad", "name", "record")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.name = name
        self.record: _Record | None = None
        self.grad = np.zeros_like(self.value) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return self.record is None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    # Operator sugar; each maps onto a primitive below.
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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class _Record:
    __slots__ = ("out", "inputs", "backward", "op", "tape")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable, op: str, tape: "Tape"):
        self.out = out
        self.tape = tape
        self.inputs = inputs
        self.backward = backward
        self.op = op


class Tape:
    """Ordered list of operation records for one forward pass."""

    def __init__(self):
        self.records: list[_Record] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        self.records = []
        self.consumed = False

    def backward(self, loss: Tensor) -> None:
        if loss.value.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self.consumed:
            raise RuntimeError("tape already swept; clear it and run a new forward pass")
        if loss.record is None or loss.record.tape is not self:
            raise ValueError("loss was not produced on this tape")
        self.consumed = True
        loss.grad = np.ones_like(loss.value)
        for rec in reversed(self.records):
            g = rec.out.grad
            if g is None:
                continue
            grads = rec.backward(g)
            for inp, gi in zip(rec.inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                gi = _unbroadcast(gi, inp.value.shape)
                if inp.grad is None:
                    inp.grad = np.array(gi, dtype=DTYPE)
                else:
                    inp.grad += gi


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def parameter(x, name: str | None = None) -> Tensor:
    return Tensor(x, requires_grad=True, name=name)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = np.zeros_like(p.value)


def _emit(value: np.ndarray, inputs: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.value = value
    out.name = None
    out.record = None
    out.grad = None
    out.requires_grad = False
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        rec = _Record(out, tuple(inputs), backward, op, tape)
        out.record = rec
        tape.records.append(rec)
    return out


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _emit(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _emit(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    av, bv = a.value, b.value
    return _emit(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    return _emit(a.value * c, (a,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for a 2-D ``b``; ``a`` may carry leading batch axes."""
    if b.value.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        ga = g @ bv.T
        a2 = av.reshape(-1, av.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _emit(av @ bv, (a, b), backward, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` with ``w`` stored as (out, in)."""
    if w.value.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise ValueError(f"linear: shape mismatch {x.shape} vs {w.shape}")
    if b is not None and b.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: bias shape mismatch {b.shape} vs {w.shape}")
    xv, wv = x.value, w.value
    out = xv @ wv.T
    if b is not None:
        out = out + b.value

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wv
        gw = g2.T @ xv.reshape(-1, xv.shape[-1])
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0).reshape(b.value.shape)

    inputs = (x, w) if b is None else (x, w, b)
    return _emit(out, inputs, backward, "linear")


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    # Split by sign so exp never overflows.
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    return _emit(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.value)
    return _emit(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    x = a.value
    if np.any(x <= 0):
        raise ValueError("log of a non-positive value")
    return _emit(np.log(x), (a,), lambda g: (g / x,), "log")


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.value
    inside = (x >= lo) & (x <= hi)
    return _emit(np.clip(x, lo, hi), (a,), lambda g: (g * inside,), "clamp")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = " vs ".join(str(t.shape) for t in tensors)
        raise ValueError(f"concat: shape mismatch {shapes}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _emit(out, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ValueError(f"stack: shape mismatch {' vs '.join(map(str, shapes))}")
    out = np.stack([t.value for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _emit(out, tensors, backward, "stack")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    return _emit(a.value.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def gather_rows(table: Tensor, ids) -> Tensor:
    """Select rows of ``table``; result has shape ``ids.shape + (cols,)``."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    bad = np.flatnonzero((ids < 0) | (ids >= n))
    if bad.size:
        pos = np.unravel_index(bad[0], ids.shape)
        raise IndexError(f"id {int(ids[pos])} at position {tuple(int(p) for p in pos)} out of range for {n} rows")

    def backward(g):
        gt = np.zeros_like(table.value)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, gt.shape[1]))
        return (gt,)

    return _emit(table.value[ids], (table,), backward, "gather_rows")


def pick(a: Tensor, ids) -> Tensor:
    """``out[b, 0] = a[b, ids[b]]`` for a 2-D ``a``."""
    ids = np.asarray(ids, dtype=np.int64)
    rows = np.arange(a.shape[0])
    if ids.shape != (a.shape[0],):
        raise ValueError(f"pick: shape mismatch {a.shape} vs {ids.shape}")

    def backward(g):
        ga = np.zeros_like(a.value)
        ga[rows, ids] = g[:, 0]
        return (ga,)

    return _emit(a.value[rows, ids][:, None], (a,), backward, "pick")


def total(a: Tensor) -> Tensor:
    """Sum of every entry, as a 1x1 tensor."""
    shape = a.shape
    return _emit(np.array([[a.value.sum()]]), (a,), lambda g: (np.broadcast_to(g.reshape(()), shape),), "total")


def sum_axis(a: Tensor, axis: int) -> Tensor:
    shape = a.shape
    ax = axis % len(shape)

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, ax), shape),)

    return _emit(a.value.sum(axis=ax), (a,), backward, "sum_axis")


def masked_softmax(a: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis; masked-out entries come out exactly 0."""
    x = a.value
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not np.all(mask.any(axis=-1)):
        raise ValueError("softmax over a fully masked vector")
    shifted = np.where(mask, x, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit(y, (a,), backward, "softmax")


def log_softmax(a: Tensor) -> Tensor:
    x = a.value
    shifted = x - x.max(axis=-1, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return _emit(y, (a,), backward, "log_softmax")


def select(a: Tensor, index: int, axis: int) -> Tensor:
    """``a`` indexed at ``index`` along ``axis``; that axis is dropped."""
    av = a.value
    ax = axis % av.ndim

    def backward(g):
        ga = np.zeros_like(av)
        idx = [slice(None)] * av.ndim
        idx[ax] = index
        ga[tuple(idx)] = g
        return (ga,)

    return _emit(np.take(av, index, axis=ax), (a,), backward, "select")


class no_tape:
    """Context in which no operation is recorded, even under an outer tape."""

    def __enter__(self):
        _tape_stack().append(None)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
