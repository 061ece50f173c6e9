"""Dense numpy tensors with a reverse-mode gradient tape.

Every op in this module records a closure mapping the output gradient to
per-parent gradients. ``backward`` walks the tape in reverse topological
order and accumulates into ``Tensor.grad``.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class NumericError(ArithmeticError):
    """A non-finite value reached an operation that forbids it."""


class _Mode(threading.local):
    dtype: type = np.float32
    grad_enabled: bool = True


_mode = _Mode()


def default_dtype():
    return _mode.dtype


@contextlib.contextmanager
def float64_mode():
    """Create new tensors in 64-bit floats inside the block."""
    prev = _mode.dtype
    _mode.dtype = np.float64
    try:
        yield
    finally:
        _mode.dtype = prev


@contextlib.contextmanager
def no_grad():
    prev = _mode.grad_enabled
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=_mode.dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, requires_grad={self.requires_grad})"

    def detach(self) -> Tensor:
        return _leaf(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: neg(self)
    __getitem__ = lambda self, idx: getitem(self, idx)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not a recorded primitive")
        return mul(self, 1.0 / other)

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> Tensor:
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False) -> Tensor:
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False) -> Tensor:
        return mean(self, axis, keepdims)


def _leaf(arr: np.ndarray) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = False
    t.grad = None
    t._parents = ()
    t._backward = None
    return t


def parameter(arr, requires_grad: bool = True) -> Tensor:
    """Wrap ``arr`` (copied, dtype kept) as a leaf tensor."""
    t = _leaf(np.array(arr))
    t.requires_grad = requires_grad
    return t


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, np.ndarray) and x.dtype.kind == "f":
        return _leaf(x)
    return _leaf(np.asarray(x, dtype=_mode.dtype))


def _scalar(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = _leaf(data)
    if _mode.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Propagate d(loss)/d(node) into ``.grad`` of every reachable tensor.

    Gradients accumulate across calls; callers zero them between steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    if not loss.requires_grad:
        return
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            # leaves own their buffer; op closures may hand one array to several parents
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g if node.grad is None else node.grad + g
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + pg if key in pending else pg


# -- elementwise ---------------------------------------------------------


def add(a, b) -> Tensor:
    if _scalar(b):
        return _result(a.data + b, (a,), lambda g: (g,))
    if _scalar(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    if _scalar(b):
        return add(a, -b)
    if _scalar(a):
        return add(neg(b), a)
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    if _scalar(b):
        return _result(a.data * b, (a,), lambda g: (g * b,))
    if _scalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(a.data * b.data, (a, b), bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


_GELU_K = float(np.sqrt(2.0 / np.pi))


def gelu(a: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    x = a.data
    t = np.tanh(_GELU_K * (x + 0.044715 * x * x * x))
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        dt = (1.0 - t * t) * _GELU_K * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return _result(out, (a,), bw)


# -- linear algebra and shape ---------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractError("matmul operands need at least 2 dimensions")
    if b.ndim == 2 and a.ndim > 2:
        # [..., n] @ [n, m] as one 2-D GEMM
        flat = a.data.reshape(-1, a.shape[-1])
        out = (flat @ b.data).reshape(*a.shape[:-1], b.shape[-1])

        def bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = flat.T @ g2 if b.requires_grad else None
            return ga, gb

        return _result(out, (a, b), bw)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(a.data @ b.data, (a, b), bw)


def reshape(a: Tensor, shape) -> Tensor:
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=()) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, axes)


def broadcast_to(a: Tensor, shape) -> Tensor:
    return _result(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_unbroadcast(g, a.shape),))


def getitem(a: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(np.array(a.data[idx]), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis`` (the sequence axis in model code)."""
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(out), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / float(n))


# -- normalisation and lookups -------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gx = ggamma = gbeta = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        if gamma.requires_grad:
            ggamma = _unbroadcast(g * xhat, gamma.shape)
        if beta.requires_grad:
            gbeta = _unbroadcast(g, beta.shape)
        return gx, ggamma, gbeta

    return _result(out, (x, gamma, beta), bw)


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup ``weight[ids]``; ``ids`` is an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ContractError(f"token id out of range [0, {weight.shape[0]})")

    def bw(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (full,)

    return _result(weight.data[ids], (weight,), bw)


def take_last(a: Tensor, ids) -> Tensor:
    """Pick ``a[..., ids]`` elementwise along the last axis."""
    ids = np.asarray(ids, dtype=np.int64)[..., None]

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, ids, g[..., None], axis=-1)
        return (full,)

    return _result(np.take_along_axis(a.data, ids, axis=-1)[..., 0], (a,), bw)


# -- distributions and losses --------------------------------------------


@dataclass
class Distribution:
    """Per-position log-probabilities with a mask of counted positions.

    ``logprobs`` has shape ``[..., seq_len, vocab]``; ``mask`` has shape
    ``[..., seq_len]`` with True marking positions that count.
    """

    logprobs: Tensor
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.logprobs.shape[:-1]:
            raise ContractError(
                f"mask shape {list(self.mask.shape)} does not match logprobs {list(self.logprobs.shape)}"
            )

    @property
    def shape(self):
        return self.logprobs.shape

    def detach(self) -> Distribution:
        return Distribution(self.logprobs.detach(), self.mask.copy())


def _masked_mean(per_pos: Tensor, mask: np.ndarray) -> Tensor:
    count = int(mask.sum())
    if count == 0:
        raise ContractError("empty mask")
    return mul(tsum(mul(per_pos, mask.astype(per_pos.data.dtype))), 1.0 / count)


def kl_divergence(p: Distribution, q: Distribution, direction: str = "as_paper") -> Tensor:
    """Mean over unmasked positions of KL(p || q), differentiable in p only.

    ``direction="reversed"`` computes KL(q || p) instead; gradients still flow
    into p alone.
    """
    if p.shape != q.shape:
        raise ContractError(f"shape mismatch: {list(p.shape)} vs {list(q.shape)}")
    if not np.array_equal(p.mask, q.mask):
        raise ContractError("mask mismatch")
    if q.logprobs.requires_grad:
        raise ContractError("q must be detached from the tape")
    if not (np.isfinite(p.logprobs.data).all() and np.isfinite(q.logprobs.data).all()):
        raise NumericError("non-finite logprob")
    lq = q.logprobs.data
    if direction == "as_paper":
        terms = mul(exp(p.logprobs), sub(p.logprobs, lq))
    elif direction == "reversed":
        terms = mul(sub(lq, p.logprobs), np.exp(lq))
    else:
        raise ContractError(f"unknown kl direction {direction!r}")
    return _masked_mean(tsum(terms, axis=-1), p.mask)


def cross_entropy(logits: Tensor, targets, mask) -> Tensor:
    """Mean negative log-likelihood of ``targets`` over unmasked positions."""
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    vocab = logits.shape[-1]
    picked = targets[mask]
    if picked.size and (picked.min() < 0 or picked.max() >= vocab):
        raise ContractError(f"target id out of range [0, {vocab})")
    nll = neg(take_last(log_softmax(logits), np.where(mask, targets, 0)))
    return _masked_mean(nll, mask)
