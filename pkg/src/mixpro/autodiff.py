"""Dense float64 tensors with reverse-mode automatic differentiation.

Only the operator set a small ViT needs is provided. Every op records a
closure that propagates its output gradient to its inputs; ``backward``
walks the recorded graph in reverse topological order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ContractError(ValueError):
    """A documented precondition of an op was violated."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # sum out axes numpy broadcast over
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_consumed", "op")

    def __init__(self, data, requires_grad: bool = False, name: str = "",
                 _parents: tuple["Tensor", ...] = (), op: str = "leaf"):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self._consumed = False
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    # arithmetic -----------------------------------------------------------
    def __add__(self, other) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other) -> "Tensor":
        return add(as_tensor(other), neg(self))

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __pow__(self, power: float) -> "Tensor":
        return power_(self, power)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str,
          fn: Callable[[np.ndarray], None]) -> Tensor:
    track = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track, op=op,
                 _parents=tuple(parents) if track else ())
    if track:
        out._backward = fn
    return out


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", fn)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), "neg", lambda g: a._accumulate(-g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), "mul", fn)


def power_(a: Tensor, p: float) -> Tensor:
    def fn(g):
        a._accumulate(g * p * a.data ** (p - 1))

    return _make(a.data ** p, (a,), "pow", fn)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return _make(out_data, (a,), "exp", lambda g: a._accumulate(g * out_data))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    out = 0.5 * x * (1.0 + t)

    def fn(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        a._accumulate(g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner))

    return _make(out, (a,), "gelu", fn)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), "reshape",
                 lambda g: a._accumulate(g.reshape(old)))


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), "transpose",
                 lambda g: a._accumulate(np.transpose(g, inv)))


def getitem(a: Tensor, index) -> Tensor:
    def fn(g):
        full = np.zeros_like(a.data)
        items = index if isinstance(index, tuple) else (index,)
        if any(isinstance(i, (list, np.ndarray)) for i in items):
            np.add.at(full, index, g)
        else:
            full[index] += g
        a._accumulate(full)

    return _make(a.data[index], (a,), "getitem", fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def fn(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat", fn)


def broadcast_to(a: Tensor, shape) -> Tensor:
    return _make(np.broadcast_to(a.data, shape).copy(), (a,), "broadcast",
                 lambda g: a._accumulate(_unbroadcast(g, a.shape)))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), "sum", fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return mul(sum_(a, axis, keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, batched over leading axes with numpy broadcasting.

    For 2-D operands: dA = dC @ B^T and dB = A^T @ dC.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(a.data @ b.data, (a, b), "matmul", fn)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``; leading axes are flattened for one GEMM."""
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: {x.shape} @ {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ w.data
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def fn(g):
        g2 = g.reshape(-1, w.shape[1])
        if x.requires_grad:
            x._accumulate((g2 @ w.data.T).reshape(x.shape))
        if w.requires_grad:
            w._accumulate(x2.T @ g2)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))

    return _make(out.reshape(*lead, w.shape[1]), parents, "linear", fn)


# ---------------------------------------------------------------------------
# normalisation / probability
# ---------------------------------------------------------------------------

def softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    s = softmax_np(a.data, axis)

    def fn(g):
        a._accumulate(s * (g - np.sum(g * s, axis=axis, keepdims=True)))

    return _make(s, (a,), "softmax", fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise over the last axis, then apply the affine ``gamma``/``beta``."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data
    n = x.shape[-1]

    def fn(g):
        if gamma.requires_grad:
            gamma._accumulate(_unbroadcast(g * xhat, gamma.shape))
        if beta.requires_grad:
            beta._accumulate(_unbroadcast(g, beta.shape))
        if x.requires_grad:
            gx = g * gamma.data
            dx = rstd * (gx - gx.mean(axis=-1, keepdims=True)
                         - xhat * (gx * xhat).sum(axis=-1, keepdims=True) / n)
            x._accumulate(dx)

    return _make(out, (x, gamma, beta), "layer_norm", fn)


def cross_entropy_soft(logits: Tensor, targets) -> Tensor:
    """Mean over the batch of ``-sum_k t_k log softmax(logits)_k``."""
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=DTYPE)
    if logits.ndim != 2 or t.shape != logits.shape:
        raise DimensionError(f"cross_entropy_soft: logits {logits.shape} vs targets {t.shape}")
    if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-6):
        raise ContractError("each target row must be a probability distribution")
    logp = log_softmax_np(logits.data, axis=1)
    batch = logits.shape[0]
    loss = -np.sum(t * logp) / batch

    def fn(g):
        p = np.exp(logp)
        # rows of t sum to one, so d/dlogits = p - t
        logits._accumulate(g * (p - t) / batch)

    return _make(np.asarray(loss), (logits,), "cross_entropy_soft", fn)


def drop_path(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Per-sample stochastic depth on a residual branch ``x`` of shape [B, ...]."""
    if not training or rate <= 0.0:
        return x
    keep = 1.0 - rate
    shape = (x.shape[0],) + (1,) * (x.ndim - 1)
    mask = (rng.random(shape) < keep).astype(DTYPE) / keep
    return mul(x, mask)


# ---------------------------------------------------------------------------
# graph + backward
# ---------------------------------------------------------------------------

@dataclass
class Graph:
    """Topologically ordered nodes reachable from ``outputs``."""

    nodes: list[Tensor] = field(default_factory=list)
    outputs: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_outputs(cls, outputs: Iterable[Tensor]) -> "Graph":
        outputs = list(outputs)
        order: list[Tensor] = []
        seen: set[int] = set()
        for root in outputs:
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
                for p in node._parents:
                    if id(p) not in seen:
                        stack.append((p, False))
        return cls(order, outputs)

    def index(self) -> dict[int, int]:
        return {id(n): i for i, n in enumerate(self.nodes)}


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf tensor.

    Gradients add onto existing ``.grad`` buffers; callers reset them. Calling
    twice on the same loss raises, since interior buffers were consumed.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise ContractError("backward already called on this loss")
    loss._consumed = True
    if not loss.requires_grad:
        return
    graph = Graph.from_outputs([loss])
    loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        if node._backward is None or node.grad is None:
            continue
        g, node.grad = node.grad, None
        node._backward(g)
