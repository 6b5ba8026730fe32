"""Dense 2-D tensors with a reverse-mode gradient tape.

Every op records onto the active :class:`Tape` when any input requires a
gradient; :func:`backward` replays the tape in reverse and accumulates into
``Tensor.grad``.  All tensors are 2-D; scalars are ``1 x 1``.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf."""


def default_eps(dtype) -> float:
    return 1e-12 if np.dtype(dtype) == np.float64 else 1e-6


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32 if dtype is None else dtype)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ValueError("item() needs a 1x1 tensor")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add_scalar(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    @property
    def T(self):
        return transpose(self)


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of ops; replayed in exact reverse by :func:`backward`."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []

    def __len__(self):
        return len(self.records)

    def clear(self) -> None:
        self.records.clear()


_tapes: list[Tape] = [Tape()]
_grad_enabled = [True]


def current_tape() -> Tape:
    return _tapes[-1]


@contextmanager
def recording(tape: Tape | None = None):
    """Route op recording to ``tape`` (a fresh one by default) inside the block."""
    tape = tape if tape is not None else Tape()
    _tapes.append(tape)
    try:
        yield tape
    finally:
        _tapes.pop()


@contextmanager
def no_grad():
    """Evaluate ops without recording them (outputs never require grad)."""
    _grad_enabled.append(False)
    try:
        yield
    finally:
        _grad_enabled.pop()


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full((1, 1), x, dtype=like.dtype))


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite value produced by {op}")


def _record(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    _check_finite(out, op)
    needs = _grad_enabled[-1] and any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=needs)
    if needs:
        current_tape().records.append((result, inputs, backward_fn))
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i in range(2) if shape[i] == 1 and grad.shape[i] != 1)
    return grad.sum(axis=axes, keepdims=True)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# --- elementwise ---------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    _check_broadcast(a, b, "add")
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def add_row_broadcast(a: Tensor, row: Tensor) -> Tensor:
    if row.shape != (1, a.shape[1]):
        raise ValueError(f"add_row_broadcast: row shape {row.shape} vs {a.shape}")
    return add(a, row)


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    _check_broadcast(a, b, "sub")
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _record("add_scalar", a.data + c, (a,), lambda g: (g,))


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; ``b`` may be a python scalar, a 1x1, a row or a column."""
    if not isinstance(b, Tensor):
        c = float(b)
        return _record("scale", a.data * c, (a,), lambda g: (g * c,))
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _record("mul", ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)))


def scale(a: Tensor, s) -> Tensor:
    if isinstance(s, Tensor) and s.shape != (1, 1):
        raise ValueError("scale factor must be a scalar")
    return mul(a, s)


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record("relu", np.where(mask, a.data, 0.0).astype(a.dtype), (a,), lambda g: (g * mask,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _record("gelu", y, (a,), back)


# --- reductions and linear algebra ------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _record("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _record("transpose", np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    return _record("sum", np.array([[a.data.sum()]], dtype=a.dtype), (a,),
                   lambda g: (np.full(shape, g[0, 0], dtype=g.dtype),))


def mean(a: Tensor) -> Tensor:
    n = a.shape[0] * a.shape[1]
    shape = a.shape
    return _record("mean", np.array([[a.data.sum() / n]], dtype=a.dtype), (a,),
                   lambda g: (np.full(shape, g[0, 0] / n, dtype=g.dtype),))


def row_sum(a: Tensor) -> Tensor:
    return _record("row_sum", a.data.sum(axis=1, keepdims=True), (a,),
                   lambda g: (np.broadcast_to(g, a.shape).copy(),))


def row_dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"row_dot: shape mismatch {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _record("row_dot", (ad * bd).sum(axis=1, keepdims=True), (a, b), lambda g: (g * bd, g * ad))


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    sizes = [t.shape[0] for t in tensors]
    if len({t.shape[1] for t in tensors}) != 1:
        raise ValueError("concat_rows: column counts differ")
    cuts = np.cumsum(sizes)[:-1]
    return _record("concat_rows", np.concatenate([t.data for t in tensors], axis=0), tuple(tensors),
                   lambda g: tuple(np.split(g, cuts, axis=0)))


def pick(a: Tensor, cols: Sequence[int]) -> Tensor:
    """Column ``a[i, cols[i]]`` for every row i."""
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.arange(a.shape[0])
    if cols.shape != (a.shape[0],):
        raise ValueError("pick: one column per row required")

    def back(g):
        out = np.zeros_like(a.data)
        out[rows, cols] = g[:, 0]
        return (out,)

    return _record("pick", a.data[rows, cols][:, None], (a,), back)


def logsumexp_rows(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise log-sum-exp over entries where ``mask`` is True (max-shifted)."""
    x = a.data
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    if not mask.any(axis=1).all():
        raise ValueError("logsumexp_rows: a row has no admitted entries")
    xm = np.where(mask, x, -np.inf)
    m = xm.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(xm - m), 0.0).astype(x.dtype)
    s = e.sum(axis=1, keepdims=True)
    out = m + np.log(s)
    soft = e / s
    return _record("logsumexp_rows", out, (a,), lambda g: (g * soft,))


# --- normalisation -------------------------------------------------------------

def row_l2_normalize(a: Tensor, eps: float | None = None) -> Tensor:
    """Divide each row by ``max(||row||, eps)``; zero rows stay zero."""
    eps = default_eps(a.dtype) if eps is None else eps
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = a.data
    norm = np.sqrt((x * x).sum(axis=1, keepdims=True))
    big = norm > eps
    denom = np.where(big, norm, eps)
    y = x / denom

    def back(g):
        proj = (g * y).sum(axis=1, keepdims=True)
        return (np.where(big, (g - y * proj) / denom, g / denom),)

    return _record("row_l2_normalize", y, (a,), back)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float | None = None) -> Tensor:
    """Per-row standardisation (biased variance, eps under the root), then affine."""
    d = a.shape[1]
    if d < 2:
        raise ValueError("layer_norm needs at least 2 columns")
    if gain.shape != (1, d) or bias.shape != (1, d):
        raise ValueError("layer_norm: gain/bias must be 1 x d")
    eps = default_eps(a.dtype) if eps is None else eps
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    y = xhat * gd + bias.data

    def back(g):
        dxhat = g * gd
        dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return dx, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True)

    return _record("layer_norm", y, (a, gain, bias), back)


# --- indexing ------------------------------------------------------------------

def _selector(rows: np.ndarray, n_cols: int, dtype) -> sp.csr_matrix:
    m = len(rows)
    return sp.csr_matrix((np.ones(m, dtype=dtype), (np.arange(m), rows)), shape=(m, n_cols))


def segment_sum(values: Tensor, segments: Sequence[int], n_out: int) -> Tensor:
    """Row k of the output sums the input rows whose segment is k."""
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape != (values.shape[0],):
        raise ValueError("segment_sum: one segment per row required")
    if len(seg) and (seg.min() < 0 or seg.max() >= n_out):
        raise IndexError("segment_sum: segment index out of range")
    # CSR rows are accumulated in ascending input order.
    agg = _selector(seg, n_out, values.dtype).T.tocsr()
    out = np.asarray(agg @ values.data)
    return _record("segment_sum", out, (values,), lambda g: (g[seg],))


def gather_rows(a: Tensor, idx: Sequence[int]) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError("gather_rows: index out of range")
    n = a.shape[0]

    def back(g):
        scatter = _selector(idx, n, g.dtype).T.tocsr()
        return (np.asarray(scatter @ g),)

    return _record("gather_rows", a.data[idx], (a,), back)


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else 1/(1-rate)."""
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


# --- backward --------------------------------------------------------------------

def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape; clears it."""
    tape = current_tape() if tape is None else tape
    if loss.shape != (1, 1):
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    pending: dict[int, tuple[Tensor, np.ndarray]] = {id(loss): (loss, np.ones_like(loss.data))}
    for out, inputs, fn in reversed(tape.records):
        entry = pending.pop(id(out), None)
        if entry is None:
            continue
        g = entry[1]
        out.grad = out.grad + g if out.grad is not None else g
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in pending:
                pending[key] = (t, pending[key][1] + gi)
            else:
                pending[key] = (t, gi)
    # leaves
    for t, g in pending.values():
        t.grad = t.grad + g if t.grad is not None else g
    tape.clear()
