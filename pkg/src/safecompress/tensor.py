"""Small reverse-mode autodiff engine over float64 numpy arrays.

Graphs are built eagerly: every operation on a :class:`Tensor` returns a new
tensor that remembers its parents and a closure computing the local
vector-Jacobian product.  ``loss.backward()`` walks the graph once in reverse
topological order and accumulates into ``.grad`` of every leaf created with
``requires_grad=True``.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64


class EngineError(Exception):
    """Base class for tensor engine failures."""


class ShapeError(EngineError, ValueError):
    pass


class NonFiniteError(EngineError, FloatingPointError):
    pass


class GraphError(EngineError, RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_vjp", "_op", "_released")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=DTYPE)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("leaf tensor holds non-finite values")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = "leaf"
        self._released = False

    # construction -------------------------------------------------------
    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple["Tensor", ...], vjp, op: str) -> "Tensor":
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"{op}: produced non-finite values")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = parents if out.requires_grad else ()
        out._vjp = vjp if out.requires_grad else None
        out._op = op
        out._released = False
        return out

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
        return self._op == "leaf"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{tag})"

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sigmoid(self):
        return sigmoid(self)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    # reverse pass -------------------------------------------------------
    def backward(self, grad=None, retain_graph: bool = False) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``."""
        if self._released:
            raise GraphError(f"{self._op}: graph already released by an earlier backward()")
        if not self.requires_grad:
            raise GraphError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise GraphError("backward() without an explicit seed needs a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=DTYPE)
            if grad.shape != self.data.shape:
                raise ShapeError(f"backward seed shape {grad.shape} != output shape {self.shape}")

        order = _topological_order(self)
        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if node._released:
                raise GraphError(f"{node._op}: graph already released by an earlier backward()")
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg
            if not retain_graph:
                node._released = True


def _topological_order(root: Tensor) -> list[Tensor]:
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
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# elementwise --------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("add", a, b)
    return Tensor._from_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("sub", a, b)
    return Tensor._from_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("mul", a, b)
    return Tensor._from_op(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast("div", a, b)
    return Tensor._from_op(
        a.data / b.data, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape),
                   _unbroadcast(-g * a.data / (b.data * b.data), b.shape)), "div")


def relu(x: Tensor) -> Tensor:
    on = x.data > 0
    return Tensor._from_op(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,), "relu")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return Tensor._from_op(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# reductions / structure ---------------------------------------------------
def tsum(x: Tensor, axis=None) -> Tensor:
    shape = x.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Tensor._from_op(np.asarray(x.data.sum(axis=axis)), (x,), vjp, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return tsum(x, axis) * (1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {src} as {shape}") from None
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(src),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = tuple(_lift(t) for t in tensors)
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return Tensor._from_op(out, ts, lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    return Tensor._from_op(
        a.data @ b.data, (a, b),
        lambda g: (g @ b.data.T if a.requires_grad else None, a.data.T @ g if b.requires_grad else None),
        "matmul")


def linear(x, weight: Tensor, bias: Tensor | None = None, name: str = "linear") -> Tensor:
    """Affine map ``x @ weight + bias`` over a batch of row vectors (or one vector)."""
    x = _lift(x)
    if x.ndim == 1 and weight.ndim == 2:
        return reshape(linear(reshape(x, (1, -1)), weight, bias, name), (weight.shape[1],))
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"{name}: input {x.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"{name}: bias {bias.shape} does not match weight {weight.shape}")
        out = out + bias.data
        parents = (x, weight, bias)

    def vjp(g):
        grads = [g @ weight.data.T if x.requires_grad else None,
                 x.data.T @ g if weight.requires_grad else None]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return Tensor._from_op(out, parents, vjp, name)


# probabilities and losses --------------------------------------------------
def logsumexp(z: np.ndarray, axis: int = -1) -> np.ndarray:
    m = z.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def log_softmax(x: Tensor) -> Tensor:
    out = x.data - logsumexp(x.data)[..., None]
    sm = np.exp(out)
    return Tensor._from_op(out, (x,), lambda g: (g - sm * g.sum(axis=-1, keepdims=True),), "log_softmax")


def softmax(x: Tensor) -> Tensor:
    out = np.exp(x.data - logsumexp(x.data)[..., None])
    return Tensor._from_op(
        out, (x,), lambda g: (out * (g - (g * out).sum(axis=-1, keepdims=True)),), "softmax")


def softmax_np(z: np.ndarray) -> np.ndarray:
    return np.exp(z - logsumexp(z)[..., None])


def _check_labels(labels, n_classes: int, batch: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 0:
        labels = labels.reshape(1)
    if labels.shape != (batch,):
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for {batch} rows")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValueError("cross_entropy: labels must be integer class indices")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"cross_entropy: label out of range [0, {n_classes})")
    return labels


def cross_entropy_per_sample(logits: Tensor, labels) -> Tensor:
    """Per-row ``-log softmax(logits)[label]``, shape (batch,)."""
    squeeze = logits.ndim == 1
    z = logits.data[None, :] if squeeze else logits.data
    if z.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 1-D or 2-D, got {logits.shape}")
    labels = _check_labels(labels, z.shape[1], z.shape[0])
    rows = np.arange(z.shape[0])
    lse = logsumexp(z)
    out = lse - z[rows, labels]
    probs = np.exp(z - lse[:, None])

    def vjp(g):
        d = probs.copy()
        d[rows, labels] -= 1.0
        d *= g[:, None]
        return (d[0] if squeeze else d,)

    return Tensor._from_op(out, (logits,), vjp, "cross_entropy")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Batch-mean softmax cross-entropy with log-sum-exp stabilisation."""
    return mean(cross_entropy_per_sample(logits, labels))


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy on raw scores; targets in {0, 1}."""
    t = np.asarray(targets, dtype=DTYPE).reshape(logits.shape)
    z = logits.data
    per = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    p = _stable_sigmoid(z)
    return Tensor._from_op(np.asarray(per.mean()), (logits,), lambda g: (g * (p - t) / n,), "bce_with_logits")

