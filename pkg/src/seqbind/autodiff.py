"""Dense float64 tensors with reverse-mode automatic differentiation.

Graphs are built eagerly: every operation returns a new Tensor that records
its parent tensors and a closure mapping the output gradient to the parent
gradients. `backward` walks the recorded graph once in reverse topological
order. A graph is single-threaded and carries no global state, so separate
graphs may be evaluated on separate threads.
"""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .errors import InputError

# Creation counter: parents always carry a smaller number than the tensors
# computed from them, so sorting by it yields a topological order. It holds
# no graph state; interleaved graphs on other threads stay independent.
_SEQ = itertools.count()


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation."""

    __slots__ = ("data", "parents", "grad_fn", "seq")

    def __init__(self, data, parents: tuple = (), grad_fn: Callable | None = None):
        if isinstance(data, np.ndarray) and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.parents = parents
        self.grad_fn = grad_fn
        self.seq = next(_SEQ)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.data.shape, b.data.shape

    def grad_fn(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor(a.data + b.data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.data.shape, b.data.shape

    def grad_fn(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return Tensor(a.data - b.data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    da, db = a.data, b.data

    def grad_fn(g):
        return _unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)

    return Tensor(da * db, (a, b), grad_fn)


def scale(x, s: float) -> Tensor:
    """Multiply by a plain python scalar (no gradient for the scalar)."""
    x = as_tensor(x)
    s = float(s)

    def grad_fn(g):
        return (g * s,)

    return Tensor(x.data * s, (x,), grad_fn)


def mul_const(x, c) -> Tensor:
    """Elementwise product with a fixed array, e.g. a padding mask."""
    x = as_tensor(x)
    c = np.asarray(c, dtype=np.float64)
    shape = x.data.shape

    def grad_fn(g):
        return (_unbroadcast(g * c, shape),)

    return Tensor(x.data * c, (x,), grad_fn)


def add_const(x, c) -> Tensor:
    """Add a fixed array or scalar (no gradient for the constant)."""
    x = as_tensor(x)
    c = np.asarray(c, dtype=np.float64)
    shape = x.data.shape

    def grad_fn(g):
        return (_unbroadcast(g, shape),)

    return Tensor(x.data + c, (x,), grad_fn)


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum many same-shaped tensors in one node (left-to-right order)."""
    if not tensors:
        raise InputError("add_n needs at least one tensor")
    out = tensors[0].data
    for t in tensors[1:]:
        out = out + t.data
    n = len(tensors)

    def grad_fn(g):
        return (g,) * n

    return Tensor(out, tuple(tensors), grad_fn)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor(a.data @ b.data, (a, b), grad_fn)


def affine(x, w, b) -> Tensor:
    """x @ w.T + b for a (out, in) weight matrix and (out,) bias."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)

    def grad_fn(g):
        return g @ w.data, g.T @ x.data, g.sum(axis=0)

    return Tensor(x.data @ w.data.T + b.data, (x, w, b), grad_fn)


def affine2(x, h, wx, wh, b) -> Tensor:
    """x @ wx.T + h @ wh.T + b, fused for recurrent gate preactivations."""
    x, h, wx, wh, b = (as_tensor(t) for t in (x, h, wx, wh, b))

    def grad_fn(g):
        return g @ wx.data, g @ wh.data, g.T @ x.data, g.T @ h.data, g.sum(axis=0)

    return Tensor(x.data @ wx.data.T + h.data @ wh.data.T + b.data, (x, h, wx, wh, b), grad_fn)


# ---------------------------------------------------------------------------
# nonlinearities

def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return Tensor(out, (x,), grad_fn)


def _sigm(d: np.ndarray) -> np.ndarray:
    # exp overflow for very negative inputs saturates cleanly to 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-d))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigm(x.data)

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, (x,), grad_fn)


def relu(x) -> Tensor:
    """max(0, x); the subgradient at the kink is 0."""
    x = as_tensor(x)
    mask = x.data > 0

    def grad_fn(g):
        return (g * mask,)

    return Tensor(np.where(mask, x.data, 0.0), (x,), grad_fn)


# ---------------------------------------------------------------------------
# shape surgery

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    orig = x.data.shape

    def grad_fn(g):
        return (g.reshape(orig),)

    return Tensor(x.data.reshape(shape), (x,), grad_fn)


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    shape = x.data.shape

    def grad_fn(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return Tensor(x.data[:, start:stop], (x,), grad_fn)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    widths = [t.data.shape[1] for t in tensors]

    def grad_fn(g):
        out, pos = [], 0
        for w in widths:
            out.append(g[:, pos:pos + w])
            pos += w
        return tuple(out)

    return Tensor(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), grad_fn)


def gather_rows(x, idx) -> Tensor:
    """Select rows by integer index; backward scatter-adds into the source."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    shape = x.data.shape

    def grad_fn(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor(x.data[idx], (x,), grad_fn)


def diag_part(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.shape[0]

    def grad_fn(g):
        full = np.zeros((n, n))
        full[np.arange(n), np.arange(n)] = g
        return (full,)

    return Tensor(x.data.diagonal().copy(), (x,), grad_fn)


# ---------------------------------------------------------------------------
# reductions and fused losses

def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.data.shape

    def grad_fn(g):
        return (np.full(shape, float(g)),)

    return Tensor(np.asarray(x.data.sum()), (x,), grad_fn)


def softmax(x) -> Tensor:
    """Row-wise softmax, shifted by the row max for stability."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return Tensor(out, (x,), grad_fn)


def nll_probs(p, targets, weights=None) -> Tensor:
    """Weighted negative log likelihood of per-row target entries.

    `p` holds row distributions, `targets` the target column per row. Rows
    with weight 0 contribute nothing and their probabilities are never read.
    """
    p = as_tensor(p)
    n = p.data.shape[0]
    targets = np.asarray(targets, dtype=np.intp)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    sel = p.data[np.arange(n), targets]
    live = w > 0
    if np.any(sel[live] <= 0.0):
        raise ArithmeticError("non-positive probability at a target index")
    safe = np.where(live, sel, 1.0)
    loss = -(w * np.log(safe)).sum()

    def grad_fn(g):
        full = np.zeros(p.data.shape)
        full[np.arange(n), targets] = np.where(live, -float(g) * w / safe, 0.0)
        return (full,)

    return Tensor(np.asarray(loss), (p,), grad_fn)


def lstm_cell(gates, c_prev) -> Tensor:
    """Fused LSTM cell tail over (B x 4H) gate preactivations.

    Gate order along the columns is input, forget, candidate, output.
    Returns the next hidden and cell states concatenated as (B x 2H);
    the backward pass is the standard hand-derived cell gradient.
    """
    gates, c_prev = as_tensor(gates), as_tensor(c_prev)
    gd, cd = gates.data, c_prev.data
    h = cd.shape[1]
    i = _sigm(gd[:, :h])
    f = _sigm(gd[:, h:2 * h])
    cand = np.tanh(gd[:, 2 * h:3 * h])
    o = _sigm(gd[:, 3 * h:])
    c_next = f * cd + i * cand
    t = np.tanh(c_next)

    def grad_fn(g):
        gh, gc = g[:, :h], g[:, h:]
        gc_total = gc + gh * o * (1.0 - t * t)
        d_gates = np.empty_like(gd)
        d_gates[:, :h] = gc_total * cand * i * (1.0 - i)
        d_gates[:, h:2 * h] = gc_total * cd * f * (1.0 - f)
        d_gates[:, 2 * h:3 * h] = gc_total * i * (1.0 - cand * cand)
        d_gates[:, 3 * h:] = gh * t * o * (1.0 - o)
        return d_gates, gc_total * f

    return Tensor(np.concatenate([o * t, c_next], axis=1), (gates, c_prev), grad_fn)


def cdist(a, b) -> Tensor:
    """All-pairs Euclidean distances between row vectors of two matrices.

    Backward guards the division at zero distance: coincident rows get the
    subgradient 0 instead of NaN.
    """
    a, b = as_tensor(a), as_tensor(b)
    diff = a.data[:, None, :] - b.data[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))

    def grad_fn(g):
        w = g / np.maximum(d, 1e-12)
        ga = (w[:, :, None] * diff).sum(axis=1)
        gb = -(w[:, :, None] * diff).sum(axis=0)
        return ga, gb

    return Tensor(d, (a, b), grad_fn)


# ---------------------------------------------------------------------------
# backward pass

def accumulate_gradients(loss: Tensor) -> dict[int, np.ndarray]:
    """Gradient of a scalar loss w.r.t. every tensor in its graph, keyed by id()."""
    if loss.data.shape != ():
        raise InputError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    # collect the interior nodes the loss depends on; creation order is a
    # topological order, so a descending sort walks the graph loss-first
    interior: list[Tensor] = [loss] if loss.grad_fn is not None else []
    stack: list[Tensor] = [loss]
    seen: set[int] = {id(loss)}
    while stack:
        for p in stack.pop().parents:
            if id(p) not in seen:
                seen.add(id(p))
                if p.grad_fn is not None:
                    interior.append(p)
                    stack.append(p)
    interior.sort(key=lambda n: n.seq, reverse=True)
    grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for node in interior:
        g = grads.get(id(node))
        if g is None:
            continue
        parent_grads = node.grad_fn(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return grads


def backward(loss: Tensor, parameters) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss for every named parameter.

    Parameters not reached by the graph get an all-zero gradient of the
    right shape. Deterministic for a fixed graph.
    """
    raw = accumulate_gradients(loss)
    out: dict[str, np.ndarray] = {}
    for p in parameters:
        g = raw.get(id(p.tensor))
        out[p.name] = g if g is not None else np.zeros_like(p.tensor.data)
    return out
