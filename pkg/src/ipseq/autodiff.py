"""Reverse-mode automatic differentiation over a fixed set of dense ops.

Everything is float64. A forward pass records a tape (the op sequence that
produced each value); ``backward`` walks it in reverse and accumulates
gradients with ``+=`` into every tensor it reaches, so unrolled recurrences
need no special casing and calling backward twice doubles the gradients.

Inference code that does not need gradients should run under ``no_grad()``,
which skips tape construction entirely.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {list(shapes)}")


class TapeError(RuntimeError):
    """Raised when backward is requested without a recorded forward pass."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference fast path)."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


def grad_enabled():
    return _grad_enabled


class Tensor:
    """Immutable dense value; optionally a node on the autodiff tape."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        if _grad_enabled:
            self._parents = parents
            self._backward = backward
        else:
            self._parents = ()
            self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def tensor(data):
    """Leaf tensor (constant or parameter)."""
    return Tensor(data)


# adjoints of the backward pass currently in flight: id(tensor) -> (tensor, array)
_pass = None


def _accum(t, g):
    buf = _pass.get(id(t))
    if buf is None:
        _pass[id(t)] = [t, np.array(g, dtype=np.float64, copy=True)]
    else:
        buf[1] += g


def _adjoint_buffer(t):
    """Mutable full-shape adjoint for scatter-style backward rules."""
    buf = _pass.get(id(t))
    if buf is None:
        buf = [t, np.zeros_like(t.data)]
        _pass[id(t)] = buf
    return buf[1]


def backward(output, seed=None):
    """Run reverse-mode accumulation from ``output``.

    ``seed`` defaults to ones of the output's shape. The pass computes its
    own adjoints and then adds them (+=) into ``.grad`` of every tensor on
    the tape, leaves included, so repeating a pass doubles the gradients.
    """
    global _pass
    if output._backward is None and not output._parents:
        raise TapeError("backward called on a tensor with no recorded forward tape")
    seed = np.ones_like(output.data) if seed is None else np.asarray(seed, dtype=np.float64)
    if seed.shape != output.data.shape:
        raise ShapeError("backward-seed", seed.shape, output.data.shape)

    order = []
    seen = set()
    stack = [(output, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    _pass = {}
    try:
        _accum(output, seed)
        for node in reversed(order):
            buf = _pass.get(id(node))
            if node._backward is not None and buf is not None:
                node._backward(buf[1])
        for t, adj in _pass.values():
            if t.grad is None:
                t.grad = adj
            else:
                t.grad += adj
    finally:
        _pass = None


# ---------------------------------------------------------------------------
# op set


def _bias_compatible(a_shape, b_shape):
    # exact match, or 1-D bias broadcast over the leading axis of a matrix
    if a_shape == b_shape:
        return True
    return len(a_shape) == 2 and len(b_shape) == 1 and a_shape[1] == b_shape[0]


def _reduce_to(g, shape):
    if g.shape == shape:
        return g
    return g.sum(axis=0)


def add(a, b):
    if not (_bias_compatible(a.shape, b.shape) or _bias_compatible(b.shape, a.shape)):
        raise ShapeError("add", a.shape, b.shape)
    out_data = a.data + b.data

    def bw(g):
        _accum(a, _reduce_to(g, a.data.shape))
        _accum(b, _reduce_to(g, b.data.shape))

    return Tensor(out_data, (a, b), bw)


def mul(a, b):
    if not (_bias_compatible(a.shape, b.shape) or _bias_compatible(b.shape, a.shape)):
        raise ShapeError("mul", a.shape, b.shape)
    out_data = a.data * b.data

    def bw(g):
        _accum(a, _reduce_to(g * b.data, a.data.shape))
        _accum(b, _reduce_to(g * a.data, b.data.shape))

    return Tensor(out_data, (a, b), bw)


def scale(a, s):
    """Multiply by a python scalar (no tape node for the scalar)."""
    s = float(s)
    return Tensor(a.data * s, (a,), lambda g: _accum(a, g * s))


def matmul(a, b):
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError("matmul", ad.shape, bd.shape)
    if ad.shape[-1] != (bd.shape[0] if bd.ndim >= 1 else None):
        raise ShapeError("matmul", ad.shape, bd.shape)
    out_data = ad @ bd

    def bw(g):
        if ad.ndim == 2 and bd.ndim == 2:
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            _accum(a, np.outer(g, bd))
            _accum(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            _accum(a, bd @ g)
            _accum(b, np.outer(ad, g))
        else:  # 1-D dot
            _accum(a, g * bd)
            _accum(b, g * ad)

    return Tensor(out_data, (a, b), bw)


def tanh(x):
    out_data = np.tanh(x.data)
    return Tensor(out_data, (x,), lambda g: _accum(x, g * (1.0 - out_data * out_data)))


def sigmoid(x):
    out_data = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor(out_data, (x,), lambda g: _accum(x, g * out_data * (1.0 - out_data)))


def softmax(x):
    """Softmax over the last axis; rows sum to 1."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        _accum(x, out_data * (g - dot))

    return Tensor(out_data, (x,), bw)


def log_softmax(x):
    """log of softmax over the last axis, computed stably."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out_data = z - lse

    def bw(g):
        p = np.exp(out_data)
        _accum(x, g - p * g.sum(axis=-1, keepdims=True))

    return Tensor(out_data, (x,), bw)


def log(x):
    return Tensor(np.log(x.data), (x,), lambda g: _accum(x, g / x.data))


def concat(parts, axis=0):
    if not parts:
        raise ShapeError("concat")
    out_data = np.concatenate([p.data for p in parts], axis=axis)

    def bw(g):
        offset = 0
        for p in parts:
            n = p.data.shape[axis]
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + n)
            _accum(p, g[tuple(idx)])
            offset += n

    return Tensor(out_data, tuple(parts), bw)


def stack(rows):
    """Stack 1-D tensors into a matrix, one per row."""
    if not rows or any(r.data.ndim != 1 for r in rows):
        raise ShapeError("stack", *[r.shape for r in rows])
    out_data = np.stack([r.data for r in rows])

    def bw(g):
        for i, r in enumerate(rows):
            _accum(r, g[i])

    return Tensor(out_data, tuple(rows), bw)


def rows(table, indices):
    """Embedding lookup: select rows of a matrix by integer index."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError("rows", table.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(f"rows: index out of range for table with {table.data.shape[0]} rows")
    out_data = table.data[idx]

    def bw(g):
        np.add.at(_adjoint_buffer(table), idx, g)

    return Tensor(out_data, (table,), bw)


def take_row(x, index):
    """Select one row of a matrix as a 1-D tensor."""
    if x.data.ndim != 2:
        raise ShapeError("take_row", x.shape)
    i = int(index)

    def bw(g):
        _adjoint_buffer(x)[i] += g

    return Tensor(x.data[i], (x,), bw)


def transpose(x):
    if x.data.ndim != 2:
        raise ShapeError("transpose", x.shape)
    return Tensor(x.data.T, (x,), lambda g: _accum(x, g.T))


def take(x, index):
    """Pick one scalar element from a 1-D tensor."""
    if x.data.ndim != 1:
        raise ShapeError("take", x.shape)
    i = int(index)

    def bw(g):
        _adjoint_buffer(x)[i] += g

    return Tensor(x.data[i], (x,), bw)


def sum_(x):
    return Tensor(x.data.sum(), (x,), lambda g: _accum(x, np.broadcast_to(g, x.data.shape).copy()))


def mean(x):
    n = x.data.size
    return Tensor(x.data.mean(), (x,), lambda g: _accum(x, np.broadcast_to(g / n, x.data.shape).copy()))


# ---------------------------------------------------------------------------
# parameters


class ParamStore:
    """Named parameter tensors with persistent gradient slots."""

    def __init__(self):
        self._params = {}

    def add(self, name, array):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(array, dtype=np.float64))
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self):
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def num_params(self):
        return sum(t.data.size for t in self._params.values())

    def global_grad_norm(self):
        total = 0.0
        for t in self._params.values():
            total += float((t.grad * t.grad).sum())
        return total ** 0.5


@dataclass
class GradCheckReport:
    per_param: dict = field(default_factory=dict)  # name -> max relative error
    tolerance: float = 1e-4

    @property
    def max_error(self):
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self):
        return self.max_error <= self.tolerance


def grad_check(loss_fn, store, eps=1e-4, tolerance=1e-4):
    """Compare backward gradients with central finite differences.

    ``loss_fn`` must evaluate the scalar loss from the store's current
    parameter values. Relative error per element is
    |fd - bp| / max(1, |fd|, |bp|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    store.zero_grads()
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise ValueError("non-finite loss in grad_check")
    backward(loss, np.asarray(1.0))

    report = GradCheckReport(tolerance=tolerance)
    for name, p in store.items():
        bp = p.grad.copy()
        fd = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                hi = float(loss_fn().data)
            flat[i] = orig - eps
            with no_grad():
                lo = float(loss_fn().data)
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2.0 * eps)
        denom = np.maximum(1.0, np.maximum(np.abs(fd), np.abs(bp)))
        report.per_param[name] = float(np.max(np.abs(fd - bp) / denom)) if flat.size else 0.0
    return report
