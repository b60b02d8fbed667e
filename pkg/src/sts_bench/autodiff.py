"""Define-by-run reverse-mode automatic differentiation over dense float64 arrays.

Every operation computes its forward value eagerly and records a backward rule,
so a loss ``Node`` carries the whole expression DAG needed by :func:`gradients`.

    >>> x = parameter(np.array(3.0))
    >>> loss = mul(x, x)
    >>> float(gradients(loss)[x])
    6.0
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

LEAKY_SLOPE = 0.2
BCE_CLAMP = 1e-7


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class Node:
    """One vertex of the expression DAG.

    ``kind`` is ``"input"``, ``"parameter"`` or the name of the op that produced
    the node. ``backward`` maps the adjoint of this node to a tuple of adjoints,
    one per parent (``None`` for parents that need no gradient).
    """

    __slots__ = ("value", "kind", "parents", "backward", "requires_grad")

    def __init__(self, value, kind, parents=(), backward=None, requires_grad=False):
        self.value = value
        self.kind = kind
        self.parents = parents
        self.backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.kind}, shape={self.value.shape})"


def constant(value) -> Node:
    return Node(np.asarray(value, dtype=np.float64), "input")


def parameter(value) -> Node:
    return Node(np.array(value, dtype=np.float64), "parameter", requires_grad=True)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _make(value, kind, parents, backward) -> Node:
    if not any(p.requires_grad for p in parents):
        return Node(value, kind)
    return Node(value, kind, parents, backward, True)


def evaluate(node: Node) -> np.ndarray:
    """Forward value of ``node`` (a copy, so callers cannot mutate the DAG)."""
    return np.array(node.value, copy=True)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise -------------------------------------------------------------------


def add(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_shape("add", a.value, b.value)
    sa, sb = a.value.shape, b.value.shape
    return _make(a.value + b.value, "add", (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_shape("sub", a.value, b.value)
    sa, sb = a.value.shape, b.value.shape
    return _make(a.value - b.value, "sub", (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_shape("mul", a.value, b.value)
    av, bv = a.value, b.value
    return _make(av * bv, "mul", (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a: Node, factor: float) -> Node:
    return _make(a.value * factor, "scale", (a,), lambda g: (g * factor,))


def sigmoid(a: Node) -> Node:
    out = _stable_sigmoid(a.value)
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Node) -> Node:
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), "relu", (a,), lambda g: (g * mask,))


def leaky_relu(a: Node, slope: float = LEAKY_SLOPE) -> Node:
    factor = np.where(a.value > 0, 1.0, slope)
    return _make(a.value * factor, "leaky_relu", (a,), lambda g: (g * factor,))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # exp only ever sees non-positive arguments
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# -- structural ---------------------------------------------------------------------


def matmul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")
    return _make(av @ bv, "matmul", (a, b), lambda g: (g @ bv.T, av.T @ g))


def concat(nodes: Sequence[Node], axis: int = -1) -> Node:
    nodes = [_as_node(n) for n in nodes]
    values = [n.value for n in nodes]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[v.shape for v in values]}") from None
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
    return _make(out, "concat", tuple(nodes), lambda g: tuple(np.split(g, bounds, axis=axis)))


def reshape(a: Node, shape) -> Node:
    old = a.value.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} into {shape}") from None
    return _make(out, "reshape", (a,), lambda g: (g.reshape(old),))


def gather(a: Node, index: np.ndarray) -> Node:
    """Rows ``a[index]``; the adjoint scatters back with :func:`segment_sum` semantics."""
    n = a.value.shape[0]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise ShapeError(f"gather: index out of range for {n} rows")
    return _make(a.value[index], "gather", (a,), lambda g: (_segment_sum(g, index, n),))


def _segment_sum(values: np.ndarray, segments: np.ndarray, count: int) -> np.ndarray:
    tail = values.shape[1:]
    width = int(np.prod(tail)) if tail else 1
    if width == 0 or values.shape[0] == 0:
        return np.zeros((count,) + tail)
    flat = (segments[:, None] * width + np.arange(width)).ravel()
    return np.bincount(flat, weights=values.reshape(-1), minlength=count * width).reshape((count,) + tail)


def segment_sum(a: Node, segments: np.ndarray, count: int) -> Node:
    """Sum rows of ``a`` into ``count`` buckets given per-row segment ids."""
    if segments.shape != (a.value.shape[0],):
        raise ShapeError(f"segment_sum: {segments.shape} segment ids for {a.value.shape[0]} rows")
    if segments.size and (segments.min() < 0 or segments.max() >= count):
        raise ShapeError(f"segment_sum: segment ids outside [0, {count})")
    return _make(_segment_sum(a.value, segments, count), "segment_sum", (a,),
                 lambda g: (g[segments],))


def sum_all(a: Node) -> Node:
    shape = a.value.shape
    return _make(np.asarray(a.value.sum()), "sum", (a,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_axis(a: Node, axis: int) -> Node:
    shape = a.value.shape
    return _make(a.value.sum(axis=axis), "sum_axis", (a,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def mean_axis(a: Node, axis: int) -> Node:
    n = a.value.shape[axis]
    return scale(sum_axis(a, axis), 1.0 / n)


def stack_mean(nodes: Sequence[Node]) -> Node:
    """Elementwise mean of same-shaped nodes (mean over a new leading axis)."""
    total = nodes[0]
    for n in nodes[1:]:
        total = add(total, n)
    return scale(total, 1.0 / len(nodes))


def weighted_pool(h: Node, weights: Node, segments: np.ndarray, count: int) -> Node:
    """Per-segment, per-channel weighted sums of node embeddings.

    ``h`` is (N, H), ``weights`` is (N, K); the result is (count, K*H) with the
    block for channel k equal to ``sum_i weights[i, k] * h[i]`` over the segment.
    """
    hv, wv = h.value, weights.value
    if hv.shape[0] != wv.shape[0]:
        raise ShapeError(f"weighted_pool: {hv.shape} embeddings vs {wv.shape} weights")
    n, width = hv.shape
    k = wv.shape[1]
    prod = (wv[:, :, None] * hv[:, None, :]).reshape(n, k * width)
    out = _segment_sum(prod, segments, count)

    def backward(g):
        gi = g[segments].reshape(n, k, width)
        return np.einsum("nkh,nk->nh", gi, wv), np.einsum("nkh,nh->nk", gi, hv)

    return _make(out, "weighted_pool", (h, weights), backward)


# -- losses -------------------------------------------------------------------------


def bce(pred: Node, target: np.ndarray, eps: float = BCE_CLAMP) -> Node:
    """Mean binary cross-entropy of probabilities clamped to ``[eps, 1 - eps]``."""
    p = pred.value
    if p.shape != target.shape:
        raise ShapeError(f"bce: prediction {p.shape} vs target {target.shape}")
    if p.size == 0:
        return _make(np.asarray(0.0), "bce", (pred,), lambda g: (np.zeros_like(p),))
    clipped = np.clip(p, eps, 1.0 - eps)
    loss = -np.mean(target * np.log(clipped) + (1.0 - target) * np.log(1.0 - clipped))
    inside = (p >= eps) & (p <= 1.0 - eps)

    def backward(g):
        d = (clipped - target) / (clipped * (1.0 - clipped)) / p.size
        return (g * d * inside,)

    return _make(np.asarray(loss), "bce", (pred,), backward)


def mse(pred: Node, target: np.ndarray) -> Node:
    p = pred.value
    if p.shape != target.shape:
        raise ShapeError(f"mse: prediction {p.shape} vs target {target.shape}")
    diff = p - target
    return _make(np.asarray(np.mean(diff * diff)), "mse", (pred,),
                 lambda g: (g * 2.0 * diff / p.size,))


def softmax_cross_entropy(logits: Node, target: np.ndarray) -> Node:
    """Mean over rows of ``-sum(target * log_softmax(logits))``."""
    z = logits.value
    if z.shape != target.shape or z.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits {z.shape} vs target {target.shape}")
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    rows = z.shape[0]
    loss = -np.sum(target * logp) / rows
    probs = np.exp(logp)

    def backward(g):
        return (g * (probs * target.sum(axis=1, keepdims=True) - target) / rows,)

    return _make(np.asarray(loss), "softmax_cross_entropy", (logits,), backward)


# -- reverse sweep ------------------------------------------------------------------


def _topological(root: Node):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def gradients(loss: Node, wrt: Optional[Iterable[Node]] = None) -> Dict[Node, np.ndarray]:
    """Adjoints of ``loss`` with respect to every reachable parameter.

    Parameters not reachable from ``loss`` (but named in ``wrt``) get zeros.
    """
    if loss.value.size != 1:
        raise ShapeError(f"gradients: loss must be scalar, got shape {loss.value.shape}")
    adjoint = {id(loss): np.ones_like(loss.value)}
    params = {}
    for node in reversed(_topological(loss)):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node.kind == "parameter":
            params[node] = g
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = pg
    if wrt is None:
        return params
    return {p: params.get(p, np.zeros_like(p.value)) for p in wrt}


# -- finite-difference verification -------------------------------------------------


@dataclass
class GradientReport:
    max_relative_error: float
    offending_parameter: Optional[str]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def gradient_check(
    loss_fn: Callable[[Dict[str, Node]], Node],
    params: Dict[str, np.ndarray],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-8,
) -> GradientReport:
    """Compare reverse-mode gradients of ``loss_fn`` against central differences.

    ``loss_fn`` receives a dict of parameter nodes and must return a scalar node.
    The error for one parameter tensor is ``||a - n|| / max(||a||, ||n||, floor)``;
    the report carries the worst tensor.
    """
    nodes = {k: parameter(v) for k, v in params.items()}
    analytic = gradients(loss_fn(nodes), nodes.values())
    worst, worst_name = 0.0, None
    for name, value in params.items():
        shape = np.shape(value)
        flat = np.array(value, dtype=np.float64).ravel()
        numeric = np.empty_like(flat)
        for idx in range(flat.size):
            plus, minus = flat.copy(), flat.copy()
            plus[idx] += step
            minus[idx] -= step
            f_plus = _scalar_loss(loss_fn, params, name, plus.reshape(shape))
            f_minus = _scalar_loss(loss_fn, params, name, minus.reshape(shape))
            numeric[idx] = (f_plus - f_minus) / (2.0 * step)
        exact = analytic[nodes[name]].ravel()
        denom = max(np.linalg.norm(exact), np.linalg.norm(numeric), floor)
        err = float(np.linalg.norm(exact - numeric) / denom)
        if err > worst or worst_name is None:
            worst, worst_name = err, name
    return GradientReport(worst, worst_name, tolerance)


def _scalar_loss(loss_fn, params, name, value) -> float:
    trial = {k: constant(v) for k, v in params.items()}
    trial[name] = constant(value)
    return float(loss_fn(trial).value)
