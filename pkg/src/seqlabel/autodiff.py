"""Dense tensors with tape-based reverse-mode differentiation.

Every op appends one record to its :class:`Graph`. Records are only kept when
at least one input requires a gradient, so constant sub-expressions cost
nothing at backward time. All values are float64.

Example::

    g = Graph()
    x = g.leaf([1.0, 2.0], requires_grad=True)
    y = sum_all(mul(x, x))
    g.backward(y)
    x.grad  # array([2., 4.])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericalError

__all__ = [
    "Tensor",
    "Graph",
    "GradCheckReport",
    "matmul",
    "add",
    "affine",
    "sub",
    "mul",
    "scale",
    "sigmoid",
    "tanh",
    "elementwise",
    "concat",
    "stack",
    "index",
    "transpose",
    "sum_all",
    "logsumexp",
    "backward",
    "check_gradients",
    "relative_error",
]


class Tensor:
    """A node in a differentiation graph.

    ``values`` is a float64 ndarray; ``grad`` stays ``None`` until a backward
    pass reaches the tensor.
    """

    __slots__ = ("values", "grad", "requires_grad", "graph", "node_id")

    def __init__(self, values, graph: Graph, node_id: int, requires_grad: bool):
        self.values = values
        self.grad = None
        self.requires_grad = requires_grad
        self.graph = graph
        self.node_id = node_id

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    op: str
    inputs: tuple
    output: Tensor
    backward_fn: Callable


class Graph:
    """Append-only tape of op records.

    ``check_finite`` makes every op verify its output contains no NaN/Inf.
    """

    def __init__(self, check_finite: bool = True):
        self.records: list[_Record] = []
        self.check_finite = check_finite
        self._next_id = 0

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def leaf(self, values, requires_grad: bool = False) -> Tensor:
        # float64 arrays are wrapped without copying; parameters stay owned by the caller
        arr = np.asarray(values, dtype=np.float64)
        if self.check_finite and not np.all(np.isfinite(arr)):
            raise NumericalError("leaf values contain NaN or Inf")
        return Tensor(arr, self, self._new_id(), requires_grad)

    def constant(self, values) -> Tensor:
        return self.leaf(values, requires_grad=False)

    def _emit(self, op: str, values, inputs: Sequence[Tensor], backward_fn) -> Tensor:
        if self.check_finite and not np.isfinite(values).all():
            raise NumericalError(f"op {op!r} produced NaN or Inf")
        needs = any(t.requires_grad for t in inputs)
        out = Tensor(values, self, self._new_id(), needs)
        if needs:
            self.records.append(_Record(op, tuple(inputs), out, backward_fn))
        return out

    def backward(self, loss: Tensor) -> None:
        """Accumulate d loss / d t into ``t.grad`` for every tensor needing it.

        Each record is visited once, newest first. Calling this twice without
        clearing grads adds the contributions again.
        """
        if loss.graph is not self:
            raise ContractError("loss was not produced on this graph")
        if loss.values.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            return
        pending = {loss.node_id: np.ones_like(loss.values)}
        leaves = {loss.node_id: loss}
        for rec in reversed(self.records):
            g = pending.pop(rec.output.node_id, None)
            leaves.pop(rec.output.node_id, None)
            if g is None:
                continue
            _accumulate(rec.output, g)
            in_grads = rec.backward_fn(g)
            for t, gi in zip(rec.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                prev = pending.get(t.node_id)
                pending[t.node_id] = gi if prev is None else prev + gi
                leaves[t.node_id] = t
        for nid, g in pending.items():
            _accumulate(leaves[nid], g)

    def clear(self) -> None:
        self.records.clear()


def _accumulate(t: Tensor, g) -> None:
    if not isinstance(g, np.ndarray) or g.shape != t.values.shape:
        g = np.asarray(g, dtype=np.float64).reshape(t.values.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _graph_of(*tensors: Tensor) -> Graph:
    graph = tensors[0].graph
    for t in tensors[1:]:
        if t.graph is not graph:
            raise ContractError("tensors belong to different graphs")
    return graph


def backward(loss: Tensor) -> None:
    loss.graph.backward(loss)


# --------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. ``b`` may be a vector (matrix-vector product)."""
    graph = _graph_of(a, b)
    A, B = a.values, b.values
    if A.ndim != 2 or B.ndim not in (1, 2) or A.shape[1] != B.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {A.shape} x {B.shape}")
    out = A @ B

    def bw(g):
        if B.ndim == 1:
            ga = np.outer(g, B) if a.requires_grad else None
        else:
            ga = g @ B.T if a.requires_grad else None
        gb = A.T @ g if b.requires_grad else None
        return ga, gb

    return graph._emit("matmul", out, (a, b), bw)


def affine(terms: Sequence[tuple], bias: Tensor) -> Tensor:
    """``sum_i M_i @ v_i + bias`` for matrix/vector pairs, recorded as one op."""
    tensors = [t for pair in terms for t in pair] + [bias]
    graph = _graph_of(*tensors)
    out = bias.values.copy()
    for M, v in terms:
        if M.values.ndim != 2 or v.values.shape != (M.shape[1],) or M.shape[0] != out.shape[0]:
            raise DimensionError(f"affine shape mismatch: {M.shape} x {v.shape} + {bias.shape}")
        out += M.values @ v.values

    def bw(g):
        grads = []
        for M, v in terms:
            grads.append(np.outer(g, v.values) if M.requires_grad else None)
            grads.append(M.values.T @ g if v.requires_grad else None)
        grads.append(g)
        return grads

    return graph._emit("affine", out, tensors, bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a vector ``b`` is broadcast onto each row of a matrix ``a``."""
    graph = _graph_of(a, b)
    A, B = a.values, b.values
    row_bcast = A.ndim == 2 and B.ndim == 1 and A.shape[1] == B.shape[0]
    if A.shape != B.shape and not row_bcast:
        raise DimensionError(f"add shape mismatch: {A.shape} vs {B.shape}")

    def bw(g):
        return g, (g.sum(axis=0) if row_bcast else g)

    return graph._emit("add", A + B, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    graph = _graph_of(a, b)
    if a.shape != b.shape:
        raise DimensionError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return graph._emit("sub", a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    graph = _graph_of(a, b)
    A, B = a.values, b.values
    if A.shape != B.shape:
        raise DimensionError(f"mul shape mismatch: {A.shape} vs {B.shape}")
    return graph._emit("mul", A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return a.graph._emit("scale", a.values * c, (a,), lambda g: (g * c,))


def sigmoid(a: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.values))
    return a.graph._emit("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.values)
    return a.graph._emit("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))


_ELEMENTWISE = {"add": add, "mul": mul, "sub": sub, "sigmoid": sigmoid, "tanh": tanh}


def elementwise(op: str, *args: Tensor) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise DimensionError("concat of an empty list")
    graph = _graph_of(*parts)
    arrays = [p.values for p in parts]
    ndim = arrays[0].ndim
    ax = axis % ndim if ndim else 0
    for arr in arrays:
        if arr.ndim != ndim or any(
            arr.shape[d] != arrays[0].shape[d] for d in range(ndim) if d != ax
        ):
            raise DimensionError(
                f"concat shapes disagree off axis {axis}: {[x.shape for x in arrays]}"
            )
    out = np.concatenate(arrays, axis=ax)
    bounds = np.cumsum([arr.shape[ax] for arr in arrays])[:-1]

    def bw(g):
        return np.split(g, bounds, axis=ax)

    return graph._emit("concat", out, tuple(parts), bw)


def stack(parts: Sequence[Tensor]) -> Tensor:
    """Stack equal-shaped tensors along a new leading axis."""
    if not parts:
        raise DimensionError("stack of an empty list")
    graph = _graph_of(*parts)
    shape = parts[0].shape
    if any(p.shape != shape for p in parts):
        raise DimensionError(f"stack shapes disagree: {[p.shape for p in parts]}")
    out = np.stack([p.values for p in parts])
    return graph._emit("stack", out, tuple(parts), lambda g: tuple(g))


def index(a: Tensor, idx) -> Tensor:
    """Numpy-style indexing; repeated indices accumulate in the backward pass."""
    A = a.values
    try:
        out = np.array(A[idx], dtype=np.float64)
    except IndexError as exc:
        raise ContractError(f"index out of range for shape {A.shape}: {exc}") from None

    def bw(g):
        full = np.zeros_like(A)
        np.add.at(full, idx, g)
        return (full,)

    return a.graph._emit("index", out, (a,), bw)


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return a.graph._emit("transpose", a.values.T.copy(), (a,), lambda g: (g.T,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.values.shape
    return a.graph._emit(
        "sum", np.array(a.values.sum()), (a,), lambda g: (np.full(shape, float(g)),)
    )


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted log-sum-exp over ``axis``; finite for any finite input."""
    A = a.values
    if A.ndim == 0 or A.shape[axis] == 0:
        raise DimensionError(f"logsumexp over an empty axis of shape {A.shape}")
    m = A.max(axis=axis, keepdims=True)
    e = np.exp(A - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)
    soft = e / s

    def bw(g):
        return (np.expand_dims(g, axis) * soft,)

    return a.graph._emit("logsumexp", out, (a,), bw)


# --------------------------------------------------------------------------
# gradient checking


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray = field(repr=False)
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def check_gradients(
    f: Callable[[Tensor], Tensor], point, step: float = 1e-5, tol: float = 1e-6
) -> GradCheckReport:
    """Compare the tape gradient of scalar ``f`` at ``point`` against central differences.

    ``f`` receives a fresh leaf tensor on a new graph each call and must
    return a scalar tensor on that graph.
    """
    x0 = np.array(point.values if isinstance(point, Tensor) else point, dtype=np.float64)

    g = Graph()
    x = g.leaf(x0, requires_grad=True)
    out = f(x)
    g.backward(out)
    analytic = x.grad if x.grad is not None else np.zeros_like(x0)

    def value_at(arr):
        gg = Graph()
        return f(gg.leaf(arr)).item()

    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    for i in range(x0.size):
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[i] += step
        xm[i] -= step
        flat[i] = (value_at(xp.reshape(x0.shape)) - value_at(xm.reshape(x0.shape))) / (2 * step)
    rel = relative_error(analytic, numeric)
    max_rel = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(analytic, numeric, rel, max_rel, tol)
