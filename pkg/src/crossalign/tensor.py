"""Dense float64 tensors with a dynamic reverse-mode tape.

Only the primitives needed by the alignment losses and the toy encoder are
provided. Every composite (cross-entropy, BCE, MSE, cosine similarity) is
built out of these primitives so the gradient of each loss is exactly the
chain of primitive gradients.

Shape rules worth knowing:

* ``matmul`` accepts ``(m,k)@(k,n)``, ``(b,m,k)@(k,n)`` and ``(b,m,k)@(b,k,n)``.
* ``add(a, b)`` requires ``b`` to broadcast (numpy rules) to ``a.shape``.
* ``softmax_rows``, ``log_softmax_rows``, ``l2_normalize_rows`` and
  ``transpose2d`` act on the last axis / last two axes.
* ``slice_rows``, ``concat_rows``, ``gather_rows`` act on axis 0.
* ``sum`` and ``mean`` reduce to a scalar of shape ``()``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

NORM_EPS = 1e-12

_ids = itertools.count(1)


class ShapeError(ValueError):
    """Raised when a primitive receives operands of the wrong shape."""

    def __init__(self, op: str, expected, actual):
        super().__init__(f"{op}: expected shape {expected}, got {actual}")
        self.op = op
        self.expected = expected
        self.actual = actual


class _Node:
    __slots__ = ("kind", "parents", "backward_fn")

    def __init__(self, kind: str, parents: tuple, backward_fn: Callable | None):
        self.kind = kind
        self.parents = parents
        self.backward_fn = backward_fn


class Tensor:
    """A float64 array, optionally tracked on the gradient tape."""

    __slots__ = ("data", "requires_grad", "node_id", "_node", "__weakref__")

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids) if requires_grad else None
        # leaves carry a node with no parents so backward can reach them
        self._node = _Node("leaf", (), None) if requires_grad else None

    @classmethod
    def _from_op(cls, data: np.ndarray, kind: str, parents: Sequence["Tensor"],
                 backward_fn: Callable) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.node_id = next(_ids)
            out._node = _Node(kind, tuple(parents), backward_fn)
        else:
            out.requires_grad = False
            out.node_id = None
            out._node = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return add(self, scale(_lift(other), -1.0))

    def __rsub__(self, other):
        return add(scale(self, -1.0), _lift(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("elementwise Tensor*Tensor is not a primitive; use matmul")
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim not in (2, 3) or bd.ndim not in (2, 3) or (ad.ndim == 2 and bd.ndim == 3):
        raise ShapeError("matmul", "(m,k)@(k,n), (b,m,k)@(k,n) or (b,m,k)@(b,k,n)",
                         (ad.shape, bd.shape))
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError("matmul", f"inner dims equal ({ad.shape[-1]})", (ad.shape, bd.shape))
    if ad.ndim == 3 and bd.ndim == 3 and ad.shape[0] != bd.shape[0]:
        raise ShapeError("matmul", f"batch dims equal ({ad.shape[0]})", (ad.shape, bd.shape))
    out = ad @ bd

    def backward(g):
        ga = g @ _swap_last(bd)
        if ad.ndim == 3 and bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _swap_last(ad) @ g
        return ga, gb

    return Tensor._from_op(out, "matmul", (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    try:
        ok = bd.ndim <= ad.ndim and np.broadcast_shapes(ad.shape, bd.shape) == ad.shape
    except ValueError:
        ok = False
    if not ok:
        raise ShapeError("add", f"second operand broadcastable to {ad.shape}", bd.shape)
    out = ad + bd
    b_shape = bd.shape

    def backward(g):
        gb = g
        lead = g.ndim - len(b_shape)
        if lead:
            gb = gb.sum(axis=tuple(range(lead)))
        axes = tuple(i for i, n in enumerate(b_shape) if n == 1 and gb.shape[i] != 1)
        if axes:
            gb = gb.sum(axis=axes, keepdims=True)
        return g, gb

    return Tensor._from_op(out, "add", (a, b), backward)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return Tensor._from_op(x.data * factor, "scale", (x,), lambda g: (g * factor,))


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return Tensor._from_op(np.where(positive, x.data, 0.0), "relu", (x,),
                           lambda g: (g * positive,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._from_op(y, "tanh", (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return Tensor._from_op(y, "sigmoid", (x,), lambda g: (g * y * (1.0 - y),))


def _need_axis(op: str, x: Tensor, ndim: int = 1):
    if x.ndim < ndim:
        raise ShapeError(op, f"at least {ndim} axes", x.shape)


def softmax_rows(x: Tensor) -> Tensor:
    _need_axis("softmax_rows", x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(y, "softmax_rows", (x,), backward)


def log_softmax_rows(x: Tensor) -> Tensor:
    _need_axis("log_softmax_rows", x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return Tensor._from_op(y, "log_softmax_rows", (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(n) for n in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size or any(n < 1 for n in shape):
        raise ShapeError("reshape", f"{x.data.size} elements", shape)
    src = x.shape
    return Tensor._from_op(x.data.reshape(shape), "reshape", (x,),
                           lambda g: (g.reshape(src),))


def transpose2d(x: Tensor) -> Tensor:
    """Swap the last two axes (a plain transpose for matrices)."""
    _need_axis("transpose2d", x, 2)
    return Tensor._from_op(_swap_last(x.data).copy(), "transpose2d", (x,),
                           lambda g: (_swap_last(g),))


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    _need_axis("slice_rows", x)
    n = x.shape[0]
    if not 0 <= start < stop <= n:
        raise IndexError(f"slice_rows: [{start}, {stop}) outside 0..{n}")
    src = x.shape

    def backward(g):
        full = np.zeros(src)
        full[start:stop] = g
        return (full,)

    return Tensor._from_op(x.data[start:stop].copy(), "slice_rows", (x,), backward)


def concat_rows(xs: Sequence[Tensor]) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ShapeError("concat_rows", "at least one input", 0)
    tail = xs[0].shape[1:]
    for t in xs:
        if t.ndim == 0 or t.shape[1:] != tail:
            raise ShapeError("concat_rows", ("*",) + tail, t.shape)
    bounds = np.cumsum([0] + [t.shape[0] for t in xs])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return Tensor._from_op(np.concatenate([t.data for t in xs], axis=0),
                           "concat_rows", xs, backward)


def gather_rows(x: Tensor, indices) -> Tensor:
    _need_axis("gather_rows", x)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    n = x.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index outside 0..{n - 1}")
    src = x.shape

    def backward(g):
        full = np.zeros(src)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._from_op(x.data[idx], "gather_rows", (x,), backward)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors the primitive name
    src = x.shape
    return Tensor._from_op(np.array(x.data.sum()), "sum", (x,),
                           lambda g: (np.full(src, float(g)),))


def mean(x: Tensor) -> Tensor:
    src = x.shape
    n = x.data.size
    return Tensor._from_op(np.array(x.data.mean()), "mean", (x,),
                           lambda g: (np.full(src, float(g) / n),))


def l2_normalize_rows(x: Tensor) -> Tensor:
    _need_axis("l2_normalize_rows", x)
    norm = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    live = norm >= NORM_EPS
    safe = np.where(live, norm, 1.0)
    y = np.where(live, x.data / safe, 0.0)

    def backward(g):
        gx = (g - y * (g * y).sum(axis=-1, keepdims=True)) / safe
        return (np.where(live, gx, 0.0),)

    return Tensor._from_op(y, "l2_normalize_rows", (x,), backward)


PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "scale": scale,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax_rows": softmax_rows,
    "log_softmax_rows": log_softmax_rows,
    "reshape": reshape,
    "transpose2d": transpose2d,
    "slice_rows": slice_rows,
    "concat_rows": lambda *xs: concat_rows(xs),
    "gather_rows": gather_rows,
    "sum": sum,
    "mean": mean,
    "l2_normalize_rows": l2_normalize_rows,
}


def primitive_forward(kind: str, inputs: Sequence[Tensor], **kwargs) -> Tensor:
    """Dispatch a primitive by name, e.g. ``primitive_forward("reshape", [x], shape=(2, 3))``."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# composite losses
# ---------------------------------------------------------------------------

def loss_cross_entropy(logits: Tensor, targets, ignore_index: int | None = None) -> Tensor:
    """Mean negative log-likelihood over the rows whose target is not ignored."""
    if logits.ndim != 2:
        raise ShapeError("loss_cross_entropy", "(N, K)", logits.shape)
    n, k = logits.shape
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.size != n:
        raise ShapeError("loss_cross_entropy", f"{n} targets", t.size)
    keep = np.flatnonzero(t != ignore_index) if ignore_index is not None else np.arange(n)
    if keep.size == 0:
        raise ValueError("loss_cross_entropy: every row is ignored, loss undefined")
    kept = t[keep]
    if kept.min() < 0 or kept.max() >= k:
        raise IndexError(f"loss_cross_entropy: target outside [0, {k})")
    rows = logits if keep.size == n else gather_rows(logits, keep)
    logp = reshape(log_softmax_rows(rows), (keep.size * k, 1))
    picked = gather_rows(logp, np.arange(keep.size) * k + kept)
    return scale(sum(picked), -1.0 / keep.size)


def loss_binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Elementwise sigmoid BCE, averaged over all elements.

    Each logit z is lifted to the two-class row [0, z]; a row-wise log-softmax
    then yields log(1 - sigmoid(z)) and log(sigmoid(z)) in stable form.
    """
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError("loss_binary_cross_entropy", logits.shape, t.shape)
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("loss_binary_cross_entropy: targets must be 0/1")
    m = logits.data.size
    z = reshape(logits, (m, 1))
    pairs = matmul(z, constant([[0.0, 1.0]]))
    logp = reshape(log_softmax_rows(pairs), (2 * m, 1))
    picked = gather_rows(logp, 2 * np.arange(m) + t.reshape(-1).astype(np.int64))
    return scale(sum(picked), -1.0 / m)


def loss_mse(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("loss_mse", a.shape, b.shape)
    n = a.data.size
    d = reshape(a - b, (1, n))
    return scale(sum(matmul(d, transpose2d(d))), 1.0 / n)


def cosine_similarity_matrix(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("cosine_similarity_matrix", "(N,H) and (M,H)", (a.shape, b.shape))
    for name, t in (("A", a), ("B", b)):
        norms = np.sqrt((t.data * t.data).sum(axis=1))
        if np.any(norms <= NORM_EPS):
            raise ValueError(f"cosine_similarity_matrix: zero-norm row in {name}")
    return matmul(l2_normalize_rows(a), transpose2d(l2_normalize_rows(b)))


# ---------------------------------------------------------------------------
# reverse sweep
# ---------------------------------------------------------------------------

def backward(root: Tensor, retain_graph: bool = False) -> dict[int, Tensor]:
    """Gradients of scalar ``root`` for every tracked tensor, keyed by ``node_id``.

    Unless ``retain_graph`` is set, interior nodes are released afterwards so
    the tape does not outlive the step.
    """
    if root.data.size != 1:
        raise ValueError(f"backward: root must be scalar, shape is {root.shape}")
    if not root.requires_grad or root._node is None:
        raise ValueError("backward: root is not part of a recorded graph")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if t.node_id in seen:
            continue
        seen.add(t.node_id)
        stack.append((t, True))
        for p in t._node.parents:
            if p.requires_grad and p.node_id not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.data)}
    for t in reversed(order):
        g = grads.get(t.node_id)
        node = t._node
        if g is None or node.backward_fn is None:
            continue
        for p, gp in zip(node.parents, node.backward_fn(g)):
            if not p.requires_grad:
                continue
            if p.node_id in grads:
                grads[p.node_id] = grads[p.node_id] + gp
            else:
                grads[p.node_id] = gp

    if not retain_graph:
        for t in order:
            if t._node.backward_fn is not None:
                t._node.parents = ()
                t._node.backward_fn = None
    return {k: Tensor(v) for k, v in grads.items()}


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    analytic: np.ndarray
    numeric: np.ndarray


def gradient_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5,
                   tol: float = 1e-4) -> GradCheckReport:
    """Compare backward() against central differences, coordinate by coordinate."""
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = parameter(base.copy())
    out = f(leaf)
    grads = backward(out)
    g = grads.get(leaf.node_id)
    analytic = g.data if g is not None else np.zeros_like(base)

    numeric = np.zeros_like(base)
    flat = numeric.reshape(-1)
    for i in range(base.size):
        plus = base.copy()
        plus.reshape(-1)[i] += eps
        minus = base.copy()
        minus.reshape(-1)[i] -= eps
        flat[i] = (f(constant(plus)).item() - f(constant(minus)).item()) / (2 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    max_rel = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(max_rel, max_rel < tol, analytic, numeric)
