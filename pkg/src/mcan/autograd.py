"""Tape-based reverse-mode autodiff over float64 numpy arrays.

Every differentiable computation in the package goes through the functions
defined here. Operations executed while a :class:`Tape` is active and with at
least one input that requires a gradient are appended to that tape; the tape
is therefore already in topological order and :func:`backward` simply walks it
in reverse.

    >>> w = Tensor([2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_(w * w)
    >>> backward(loss, tape)[w]
    array([4.])
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import ContractError, DegenerateRowError, DimensionError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "sgd_step",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "transpose",
    "relu",
    "exp",
    "log",
    "sum_",
    "mean",
    "softmax",
    "softmax_rows",
    "log_softmax",
    "concat",
    "take",
    "pick",
    "reshape",
    "slice_",
    "ffn_apply",
]

_local = threading.local()


def _stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


class Tensor:
    """Dense float64 array with an optional gradient requirement."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ContractError(f"tensor of shape {self.shape} is not a scalar")

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __radd__ = lambda self, other: add(other, self)  # noqa: E731
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __rsub__ = lambda self, other: sub(other, self)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731
    __rmul__ = lambda self, other: mul(other, self)  # noqa: E731
    __matmul__ = lambda self, other: matmul(self, other)  # noqa: E731
    __neg__ = lambda self: neg(self)  # noqa: E731


class _Node:
    __slots__ = ("out", "inputs", "grad_fn")

    def __init__(self, out, inputs, grad_fn):
        self.out = out
        self.inputs = inputs
        self.grad_fn = grad_fn


class Tape:
    """Ordered record of executed primitive operations.

    Use as a context manager; nested tapes are allowed and the innermost one
    records. A tape belongs to the thread that entered it.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)


def _active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.name = None
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(out, tuple(inputs), grad_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor, tape: Tape, wrt: Iterable[Tensor] | None = None) -> dict:
    """Gradient of a scalar ``loss`` with respect to tensors recorded on ``tape``.

    Returns a dict keyed by tensor identity. When ``wrt`` is given every
    tensor in it gets an entry, zero if it is not on a path to the loss;
    otherwise entries exist for every gradient-requiring leaf that fed the tape.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring a gradient")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    keep: dict[int, Tensor] = {id(loss): loss}
    # reverse tape order: every consumer of a node's output was already visited
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.grad_fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            gi = _unbroadcast(gi, inp.data.shape)
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                keep[key] = inp

    if wrt is None:
        return {keep[k]: g for k, g in grads.items()}
    out = {}
    for t in wrt:
        g = grads.get(id(t))
        out[t] = g if g is not None else np.zeros_like(t.data)
    return out


def sgd_step(params: Mapping[str, Tensor] | Iterable[Tensor], grads: Mapping, lr: float) -> None:
    """In-place ``p -= lr * g`` for every parameter."""
    tensors = params.values() if isinstance(params, Mapping) else params
    tensors = list(tensors)
    for p in tensors:
        if p not in grads:
            raise ContractError(f"no gradient entry for parameter {p.name or p!r}")
    for p in tensors:
        p.data -= lr * grads[p]


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Matrix product, batched over leading axes like ``np.matmul``."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != (b.shape[-2] if b.ndim > 1 else b.shape[0]):
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        if bd.ndim == 1:
            return np.multiply.outer(g, bd), np.tensordot(g, ad, axes=(range(g.ndim), range(g.ndim)))
        if ad.ndim == 1:
            return g @ np.swapaxes(bd, -1, -2), np.multiply.outer(ad, g)
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _make(ad @ bd, (a, b), grad_fn)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = _as_tensor(a)
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    on = a.data > 0
    return _make(np.where(on, a.data, 0.0), (a,), lambda g: (g * on,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    shape = a.shape

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), grad_fn)


def mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis=axis), 1.0 / n)


def _check_mask(x: np.ndarray, mask) -> np.ndarray | None:
    if mask is None:
        return None
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not mask.any(axis=-1).all():
        raise DegenerateRowError("softmax row has every entry masked")
    return mask


def softmax(x, mask=None) -> Tensor:
    """Softmax over the last axis; masked-out (False) entries are exactly 0."""
    x = _as_tensor(x)
    mask = _check_mask(x.data, mask)
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _make(p, (x,), grad_fn)


def softmax_rows(logits, mask=None) -> Tensor:
    """Row-wise softmax of a matrix with an optional boolean keep-mask."""
    return softmax(logits, mask)


def log_softmax(x, mask=None) -> Tensor:
    """Log-softmax over the last axis; masked entries come out as ``-inf``."""
    x = _as_tensor(x)
    mask = _check_mask(x.data, mask)
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def grad_fn(g):
        if mask is not None:
            g = np.where(mask, g, 0.0)
        gx = g - p * g.sum(axis=-1, keepdims=True)
        return (gx,)

    return _make(out, (x,), grad_fn)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    ax = axis % data.ndim
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(data, ts, grad_fn)


def take(table, index) -> Tensor:
    """Rows of ``table`` selected by an integer array of any shape."""
    table = _as_tensor(table)
    index = np.asarray(index, dtype=np.intp)
    shape = table.shape

    def grad_fn(g):
        return (_scatter_rows(index.reshape(-1), g.reshape((index.size,) + shape[1:]), shape),)

    return _make(table.data[index], (table,), grad_fn)


def _scatter_rows(index: np.ndarray, rows: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``rows`` into a zero array of ``shape`` at ``index`` (repeated indices accumulate)."""
    if index.size < 64 or len(shape) == 1:
        out = np.zeros(shape)
        np.add.at(out, index, rows)
        return out
    flat = rows.reshape(index.size, -1)
    scatter = sparse.csr_matrix(
        (np.ones(index.size), (index, np.arange(index.size))), shape=(shape[0], index.size)
    )
    return np.asarray(scatter @ flat).reshape(shape)


def pick(x, index) -> Tensor:
    """``x[..., index]`` elementwise: one entry of the last axis per leading position."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    if index.shape != x.shape[:-1]:
        raise DimensionError(f"pick index shape {index.shape} does not match {x.shape[:-1]}")
    expanded = index[..., None]

    def grad_fn(g):
        out = np.zeros(x.shape)
        np.put_along_axis(out, expanded, g[..., None], axis=-1)
        return (out,)

    return _make(np.take_along_axis(x.data, expanded, axis=-1)[..., 0], (x,), grad_fn)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def slice_(a, key) -> Tensor:
    """Basic (non-fancy) indexing."""
    a = _as_tensor(a)
    shape = a.shape

    def grad_fn(g):
        out = np.zeros(shape)
        out[key] = g
        return (out,)

    return _make(a.data[key], (a,), grad_fn)


def ffn_apply(layers: Sequence[tuple[Tensor, Tensor]], x) -> Tensor:
    """Stack of affine layers ``x @ W + b`` with ReLU between consecutive layers."""
    x = _as_tensor(x)
    for i, (w, b) in enumerate(layers):
        if x.shape[-1] != w.shape[0]:
            raise DimensionError(
                f"layer {i} expects width {w.shape[0]}, input has width {x.shape[-1]}"
            )
        if i:
            x = relu(x)
        x = add(matmul(x, w), b)
    return x
