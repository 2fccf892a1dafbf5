"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every differentiable operation produces a new :class:`Tensor` that carries a
:class:`Node` pointing at its inputs and a closure mapping the upstream
gradient to one gradient per input. :func:`backward` orders the reachable
nodes topologically, walks them once in reverse and then releases them, so a
graph can be differentiated exactly once.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float64

_state = threading.local()


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class TapeError(RuntimeError):
    """Misuse of the computation graph (non-scalar loss, double backward...)."""


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Node:
    __slots__ = ("parents", "backward_fn", "op", "consumed")

    def __init__(self, parents: tuple[Tensor, ...], backward_fn: Callable, op: str):
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.consumed = False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: Node | None = None

    @classmethod
    def _wrap(cls, data: np.ndarray) -> Tensor:
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = False
        t.grad = None
        t.node = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def sum(self, axis=None) -> Tensor:
        return tensor_sum(self, axis)

    def mean(self, axis=None) -> Tensor:
        return mean(self, axis)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=DTYPE))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor._wrap(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(tuple(parents), backward_fn, op)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    The graph is released afterwards; calling this twice on the same graph
    raises :class:`TapeError`.
    """
    if loss.data.size != 1:
        raise TapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        raise TapeError("loss is not attached to a recorded graph")
    if loss.node.consumed:
        raise TapeError("graph already consumed by a previous backward()")

    order = _topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for tensor in reversed(order):
        g = grads.pop(id(tensor), None)
        node = tensor.node
        if node is None:
            if g is not None:
                tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
            continue
        if node.consumed:
            raise TapeError(f"graph node {node.op!r} already consumed by a previous backward()")
        if g is not None:
            parent_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        node.consumed = True
        node.backward_fn = None
        node.parents = ()


# --------------------------------------------------------------------------
# elementwise and linear algebra


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def grad_fn(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), grad_fn, "mul")


def matmul(a, b) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return _make(ad @ bd, (a, b), grad_fn, "matmul")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _make(np.log(xd), (x,), lambda g: (g / xd,), "log")


# --------------------------------------------------------------------------
# reductions and shape manipulation


def tensor_sum(x, axis=None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(np.asarray(x.data.sum(axis=axis)), (x,), grad_fn, "sum")


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    count = x.data.size if axis is None else np.prod([shape[a] for a in np.atleast_1d(axis)])

    def grad_fn(g):
        if axis is None:
            return (np.full(shape, float(g) / count),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape) / count,)

    return _make(np.asarray(x.data.mean(axis=axis)), (x,), grad_fn, "mean")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.T, (x,), lambda g: (g.T,), "transpose")


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    basic = all(isinstance(i, (slice, int, type(None), type(Ellipsis)))
                for i in (index if isinstance(index, tuple) else (index,)))

    def grad_fn(g):
        out = np.zeros(shape, dtype=DTYPE)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _make(np.array(x.data[index]), (x,), grad_fn, "getitem")


def take_rows(x, rows) -> Tensor:
    """Gather rows of a 2-D tensor; repeated rows accumulate gradient."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.intp)
    shape = x.shape
    unique = len(np.unique(rows)) == len(rows)

    def grad_fn(g):
        out = np.zeros(shape, dtype=DTYPE)
        if unique:
            out[rows] = g
        else:
            np.add.at(out, rows, g)
        return (out,)

    return _make(x.data[rows], (x,), grad_fn, "take_rows")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(data, tensors, grad_fn, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def grad_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(data, tensors, grad_fn, "stack")


# --------------------------------------------------------------------------
# losses and distances


def squared_distances(a, b) -> Tensor:
    """Pairwise squared Euclidean distances between rows of ``a`` and ``b``.

    ``a`` is (n, D) and ``b`` is (k, D); the result is (n, k). 1-D inputs are
    treated as single rows and give a scalar.
    """
    a, b = as_tensor(a), as_tensor(b)
    vector_case = a.ndim == 1 and b.ndim == 1
    ad = a.data.reshape(1, -1) if a.ndim == 1 else a.data
    bd = b.data.reshape(1, -1) if b.ndim == 1 else b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[1]:
        raise ShapeError(f"squared_distances: incompatible shapes {a.shape} and {b.shape}")
    diff = ad[:, None, :] - bd[None, :, :]
    out = np.einsum("nkd,nkd->nk", diff, diff)

    def grad_fn(g):
        g = np.asarray(g).reshape(out.shape)
        weighted = 2.0 * g[:, :, None] * diff
        ga = weighted.sum(axis=1).reshape(a.shape) if a.requires_grad else None
        gb = (-weighted.sum(axis=0)).reshape(b.shape) if b.requires_grad else None
        return ga, gb

    data = np.asarray(out[0, 0]) if vector_case else out
    return _make(data, (a, b), grad_fn, "squared_distances")


def log_softmax_array(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    y = log_softmax_array(x.data, axis)
    p = np.exp(y)
    return _make(y, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def softmax_cross_entropy(logits, targets, reduction: str = "mean") -> Tensor:
    """Negative log-softmax of the target class per row of ``logits`` (n, K).

    ``reduction`` is ``"mean"`` (default) or ``"sum"`` over the n rows.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (n, K) logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=np.intp).reshape(-1)
    n, k = logits.shape
    if targets.shape[0] != n:
        raise ShapeError(f"softmax_cross_entropy: {n} rows but {targets.shape[0]} targets")
    if n and (targets.min() < 0 or targets.max() >= k):
        bad = targets[(targets < 0) | (targets >= k)][0]
        raise IndexError(f"target index {bad} out of range for {k} classes")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    logp = log_softmax_array(logits.data, axis=1)
    rows = np.arange(n)
    total = -logp[rows, targets].sum()
    scale = 1.0 / n if reduction == "mean" and n else 1.0

    def grad_fn(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * (float(g) * scale),)

    return _make(np.asarray(total * scale), (logits,), grad_fn, "softmax_cross_entropy")


# --------------------------------------------------------------------------
# recurrent cell


def lstm_cell(x, state, weight, bias, mask=None) -> Tensor:
    """One step of an LSTM over a batch.

    ``x`` is (B, E); ``state`` packs hidden and cell as (B, 2H); ``weight`` is
    ((E + H), 4H) with gate blocks ordered input, forget, candidate, output;
    ``bias`` is (4H,). Rows whose ``mask`` entry is 0 carry their state
    through unchanged, which is how padded positions are skipped.
    Returns the packed next state (B, 2H).
    """
    x, state, weight, bias = (as_tensor(t) for t in (x, state, weight, bias))
    xd, sd, wd = x.data, state.data, weight.data
    e = xd.shape[1]
    hdim = sd.shape[1] // 2
    if wd.shape != (e + hdim, 4 * hdim) or bias.shape != (4 * hdim,):
        raise ShapeError(
            f"lstm_cell: weight {wd.shape} / bias {bias.shape} do not match input {xd.shape} "
            f"and state {sd.shape}")
    h, c = sd[:, :hdim], sd[:, hdim:]
    xh = np.concatenate([xd, h], axis=1)
    z = xh @ wd + bias.data
    i = _sigmoid(z[:, :hdim])
    f = _sigmoid(z[:, hdim:2 * hdim])
    cand = np.tanh(z[:, 2 * hdim:3 * hdim])
    o = _sigmoid(z[:, 3 * hdim:])
    c_new = f * c + i * cand
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is None:
        m = np.ones((xd.shape[0], 1))
    else:
        m = np.asarray(mask, dtype=DTYPE).reshape(-1, 1)
    keep = 1.0 - m
    out = np.concatenate([m * h_new + keep * h, m * c_new + keep * c], axis=1)

    def grad_fn(g):
        gh, gc = g[:, :hdim], g[:, hdim:]
        dh_new = m * gh
        dc = m * gc + dh_new * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * cand * i * (1.0 - i),
            dc * c * f * (1.0 - f),
            dc * i * (1.0 - cand * cand),
            dh_new * tc * o * (1.0 - o),
        ], axis=1)
        dxh = dz @ wd.T
        dstate = np.concatenate([dxh[:, e:] + keep * gh, dc * f + keep * gc], axis=1)
        dw = xh.T @ dz if weight.requires_grad else None
        db = dz.sum(axis=0) if bias.requires_grad else None
        return dxh[:, :e], dstate, dw, db

    return _make(out, (x, state, weight, bias), grad_fn, "lstm_cell")
