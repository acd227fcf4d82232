"""Dense 2-D arithmetic with a small reverse-mode differentiation engine.

Every value is a 2-D float64 ``numpy`` array wrapped in a :class:`Node`.
Operations build the graph eagerly; :func:`backward` walks it in reverse
topological order and accumulates gradients into ``Node.grad``.

Broadcasting is limited to expanding a 1-row or 1-column operand (or a
1x1 scalar) against a full matrix. Anything else raises ``ShapeMismatch``.

Leaf gradients accumulate across calls to :func:`backward`; call
:func:`zero_grad` between optimisation steps.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NonFinite, NotScalar, ShapeMismatch

__all__ = [
    "Node", "as_matrix", "constant", "parameter", "backward", "zero_grad",
    "topological_order", "finite_diff_check",
    "add", "sub", "mul", "div", "matmul", "transpose", "neg", "scale",
    "add_scalar", "square", "relu", "exp", "log", "row_softmax",
    "row_log_softmax", "softmax_vector", "sum", "mean", "row_norm",
    "row_normalize", "reshape", "gather_rows", "col_slice", "neighbor_pool",
    "identity", "cumsum",
]


def as_matrix(data) -> np.ndarray:
    """Coerce scalars, vectors and nested lists to a 2-D float64 array."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeMismatch(f"expected at most 2 dimensions, got {arr.ndim}")
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFinite(f"non-finite entry in {what}")


class Node:
    """A matrix value in the differentiation graph."""

    __slots__ = ("value", "grad", "parents", "requires_grad", "op", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, parents: Sequence["Node"] = (),
                 op: str = "leaf", name: str | None = None):
        value = as_matrix(value)
        _check_finite(value, op)
        self.value = value
        self.grad: np.ndarray | None = None
        self.parents = tuple(parents)
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.op = op
        self.name = name
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Node({label}, shape={self.shape})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    @property
    def T(self):
        return transpose(self)


def constant(data, name: str | None = None) -> Node:
    return Node(data, requires_grad=False, name=name)


def parameter(data, name: str | None = None) -> Node:
    return Node(data, requires_grad=True, name=name)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _make(value: np.ndarray, parents: Sequence[Node], op: str, backward_fn) -> Node:
    out = Node(value, parents=parents, op=op)
    if out.requires_grad:
        out._backward = backward_fn
    return out


# ----------------------------------------------------------------------
# element-wise binary ops with 1-row / 1-col expansion

def _broadcast_shape(a: tuple, b: tuple, op: str) -> tuple:
    if a == b:
        return a
    rows = _expand_dim(a[0], b[0])
    cols = _expand_dim(a[1], b[1])
    if rows is None or cols is None:
        raise ShapeMismatch(f"{op}: cannot combine shapes {a} and {b}")
    return rows, cols


def _expand_dim(m: int, n: int):
    if m == n:
        return m
    if m == 1:
        return n
    if n == 1:
        return m
    return None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def add(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a.shape, b.shape, "add")

    def bw(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.value + b.value, (a, b), "add", bw)


def sub(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a.shape, b.shape, "sub")

    def bw(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.value - b.value, (a, b), "sub", bw)


def mul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a.shape, b.shape, "mul")

    def bw(g):
        a._accumulate(_unbroadcast(g * b.value, a.shape))
        b._accumulate(_unbroadcast(g * a.value, b.shape))

    return _make(a.value * b.value, (a, b), "mul", bw)


def div(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _broadcast_shape(a.shape, b.shape, "div")
    out_value = a.value / b.value

    def bw(g):
        a._accumulate(_unbroadcast(g / b.value, a.shape))
        b._accumulate(_unbroadcast(-g * out_value / b.value, b.shape))

    return _make(out_value, (a, b), "div", bw)


def matmul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ g)

    return _make(a.value @ b.value, (a, b), "matmul", bw)


# ----------------------------------------------------------------------
# unary ops

def transpose(a) -> Node:
    a = _lift(a)
    return _make(a.value.T.copy(), (a,), "transpose", lambda g: a._accumulate(g.T))


def neg(a) -> Node:
    a = _lift(a)
    return _make(-a.value, (a,), "neg", lambda g: a._accumulate(-g))


def scale(a, c: float) -> Node:
    a = _lift(a)
    c = float(c)
    return _make(a.value * c, (a,), "scale", lambda g: a._accumulate(g * c))


def add_scalar(a, c: float) -> Node:
    a = _lift(a)
    return _make(a.value + float(c), (a,), "add_scalar", lambda g: a._accumulate(g))


def identity(a) -> Node:
    a = _lift(a)
    return _make(a.value.copy(), (a,), "identity", lambda g: a._accumulate(g))


def square(a) -> Node:
    a = _lift(a)
    return _make(a.value * a.value, (a,), "square", lambda g: a._accumulate(2.0 * a.value * g))


def relu(a) -> Node:
    a = _lift(a)
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), (a,), "relu", lambda g: a._accumulate(g * mask))


def exp(a) -> Node:
    a = _lift(a)
    out_value = np.exp(a.value)
    return _make(out_value, (a,), "exp", lambda g: a._accumulate(g * out_value))


def log(a) -> Node:
    a = _lift(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out_value = np.log(a.value)
    return _make(out_value, (a,), "log", lambda g: a._accumulate(g / a.value))


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def row_softmax(a) -> Node:
    a = _lift(a)
    s = _softmax_rows(a.value)

    def bw(g):
        a._accumulate(s * (g - (g * s).sum(axis=1, keepdims=True)))

    return _make(s, (a,), "row_softmax", bw)


def row_log_softmax(a) -> Node:
    a = _lift(a)
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out_value = shifted - lse
    s = np.exp(out_value)

    def bw(g):
        a._accumulate(g - s * g.sum(axis=1, keepdims=True))

    return _make(out_value, (a,), "row_log_softmax", bw)


def softmax_vector(a) -> Node:
    """Softmax over all entries of a 1-row or 1-col matrix."""
    a = _lift(a)
    if 1 not in a.shape:
        raise ShapeMismatch(f"softmax_vector expects a vector, got {a.shape}")
    flat = a.value.reshape(1, -1)
    s = _softmax_rows(flat)

    def bw(g):
        g = g.reshape(1, -1)
        a._accumulate((s * (g - (g * s).sum())).reshape(a.shape))

    return _make(s.reshape(a.shape), (a,), "softmax_vector", bw)


def sum(a, axis: int | None = None) -> Node:  # noqa: A001 - mirrors numpy
    a = _lift(a)
    if axis is None:
        out_value = np.array([[a.value.sum()]])
    elif axis in (0, 1):
        out_value = a.value.sum(axis=axis, keepdims=True)
    else:
        raise ShapeMismatch(f"sum: bad axis {axis}")
    return _make(out_value, (a,), "sum", lambda g: a._accumulate(np.broadcast_to(g, a.shape)))


def mean(a, axis: int | None = None) -> Node:
    a = _lift(a)
    count = a.value.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / count)


def row_norm(a) -> Node:
    """Row-wise L2 norm, n x 1. Zero rows get a zero subgradient."""
    a = _lift(a)
    norms = np.sqrt((a.value * a.value).sum(axis=1, keepdims=True))

    def bw(g):
        safe = np.where(norms > 0, norms, 1.0)
        a._accumulate(np.where(norms > 0, g * a.value / safe, 0.0))

    return _make(norms, (a,), "row_norm", bw)


def row_normalize(a) -> Node:
    """Divide each row by its L2 norm; all-zero rows map to zero rows."""
    a = _lift(a)
    norms = np.sqrt((a.value * a.value).sum(axis=1, keepdims=True))
    nonzero = norms > 0
    safe = np.where(nonzero, norms, 1.0)
    u = np.where(nonzero, a.value / safe, 0.0)

    def bw(g):
        proj = g - u * (g * u).sum(axis=1, keepdims=True)
        a._accumulate(np.where(nonzero, proj / safe, 0.0))

    return _make(u, (a,), "row_normalize", bw)


def reshape(a, shape: tuple[int, int]) -> Node:
    a = _lift(a)
    try:
        out_value = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(f"reshape {a.shape} -> {shape}") from exc
    if out_value.ndim != 2:
        raise ShapeMismatch(f"reshape target must be 2-D, got {shape}")
    return _make(out_value, (a,), "reshape", lambda g: a._accumulate(g.reshape(a.shape)))


def _selection(idx: np.ndarray, n: int) -> sp.csr_matrix:
    m = idx.size
    return sp.csr_matrix((np.ones(m), (np.arange(m), idx)), shape=(m, n))


def gather_rows(a, idx) -> Node:
    """Rows ``a[idx]`` for a flat integer index array (repeats allowed)."""
    a = _lift(a)
    idx = np.asarray(idx, dtype=np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeMismatch(f"gather_rows: index out of range for {a.shape[0]} rows")

    def bw(g):
        a._accumulate(np.asarray(_selection(idx, a.shape[0]).T @ g))

    return _make(a.value[idx], (a,), "gather_rows", bw)


def col_slice(a, start: int, stop: int) -> Node:
    a = _lift(a)
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeMismatch(f"col_slice [{start}:{stop}] of {a.shape}")

    def bw(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        a._accumulate(full)

    return _make(a.value[:, start:stop].copy(), (a,), "col_slice", bw)


def neighbor_pool(weights, h, idx) -> Node:
    """Row i of the result is ``sum_k weights[i, k] * h[idx[i, k]]``.

    ``weights`` and ``idx`` are n x K; ``h`` is m x d. Implemented as a
    sparse n x m operator so memory stays O(nK).
    """
    weights, h = _lift(weights), _lift(h)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.shape != weights.shape:
        raise ShapeMismatch(f"neighbor_pool: idx {idx.shape} vs weights {weights.shape}")
    n, k = idx.shape
    rows = np.repeat(np.arange(n), k)
    op = sp.csr_matrix((weights.value.ravel(), (rows, idx.ravel())), shape=(n, h.shape[0]))

    def bw(g):
        if weights.requires_grad:
            weights._accumulate((h.value[idx] * g[:, None, :]).sum(axis=2))
        if h.requires_grad:
            h._accumulate(np.asarray(op.T @ g))

    return _make(np.asarray(op @ h.value), (weights, h), "neighbor_pool", bw)


def cumsum(a) -> Node:
    """Cumulative sum down the rows (axis 0)."""
    a = _lift(a)

    def bw(g):
        a._accumulate(np.cumsum(g[::-1], axis=0)[::-1])

    return _make(np.cumsum(a.value, axis=0), (a,), "cumsum", bw)


# ----------------------------------------------------------------------
# graph traversal

def topological_order(root: Node) -> list[Node]:
    """Nodes reachable from ``root``, each after all of its parents."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> dict[int, np.ndarray]:
    """Accumulate d loss / d node into every reachable ``requires_grad`` node.

    Returns a map from ``id(node)`` to its gradient for convenience.
    """
    if loss.shape != (1, 1):
        raise NotScalar(f"backward needs a 1x1 loss, got {loss.shape}")
    order = topological_order(loss)
    for node in order:
        if node._backward is not None:
            node.grad = None
    if loss.requires_grad:
        loss._accumulate(np.ones((1, 1)))
    else:
        loss.grad = np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    return {id(n): n.grad for n in order if n.requires_grad and n.grad is not None}


def zero_grad(nodes: Iterable[Node]) -> None:
    for node in nodes:
        node.grad = None


def finite_diff_check(f: Callable[[Node], Node], theta, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    ``f`` maps a parameter node to a 1x1 loss node. The error for each
    coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = as_matrix(theta)
    param = parameter(base.copy())
    loss = f(param)
    backward(loss)
    analytic = param.grad if param.grad is not None else np.zeros_like(base)

    worst = 0.0
    for i in np.ndindex(base.shape):
        shifted = base.copy()
        shifted[i] += eps
        up = _probe(f, shifted)
        shifted[i] -= 2 * eps
        down = _probe(f, shifted)
        numeric = (up - down) / (2 * eps)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst


def _probe(f, value: np.ndarray) -> float:
    out = f(constant(value)).value
    if out.shape != (1, 1):
        raise NotScalar(f"finite_diff_check: f returned shape {out.shape}")
    if not np.isfinite(out).all():
        raise NonFinite("finite_diff_check: f returned a non-finite value")
    return float(out[0, 0])
