"""Minimal reverse-mode automatic differentiation on numpy arrays.

A ``Node`` wraps a float64 array together with the local backward rules of
the operation that produced it.  Nodes are created in topological order, so
``backward`` only has to walk the reachable part of the tape in reverse
creation order.  Every primitive in this module accepts either ``Node``
arguments or plain arrays/scalars; in the latter case it evaluates eagerly
with numpy and returns a plain array.  Code written against these functions
therefore works both as a fast numpy forward pass and as a taped,
differentiable forward pass, depending on what is fed in.

Tensors follow a "last axis is the feature axis" convention: reductions
(``dot``, ``norm``, ``softmax``) act on ``axis=-1`` and broadcasting over
leading batch axes is supported, with gradients summed back to the original
parameter shapes.
"""

from __future__ import annotations

import itertools
from typing import Callable, Dict, Optional

import numpy as np

Gradient = Dict[str, np.ndarray]

_ATANH_LIMIT = 1.0 - 1e-15
_SAFE_EPS = 1e-15


class Node:
    """One vertex of the differentiation graph."""

    __slots__ = ("value", "parents", "vjps", "order", "grad", "name")
    _ids = itertools.count()

    # make `ndarray <op> Node` defer to the reflected Node operators instead
    # of broadcasting the Node into an object array
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjps=(), name: Optional[str] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents          # tuple of parent Nodes
        self.vjps = vjps                # tuple of callables grad -> parent grad
        self.order = next(Node._ids)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def param(cls, name: str, value) -> "Node":
        """A tracked leaf; ``backward`` reports its gradient under ``name``."""
        return cls(value, name=name)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.value.shape}{tag})"

    # -- operator sugar ----------------------------------------------------

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


def is_node(x) -> bool:
    return isinstance(x, Node)


def value_of(x) -> np.ndarray:
    """Plain array behind ``x`` whether or not it is taped."""
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(x, y, fwd: Callable, vjp_x: Callable, vjp_y: Callable):
    """Build a node for a binary op; constants stay out of the graph."""
    xn, yn = isinstance(x, Node), isinstance(y, Node)
    if not xn and not yn:
        return fwd(value_of(x), value_of(y))
    xv, yv = value_of(x), value_of(y)
    out = fwd(xv, yv)
    parents, vjps = [], []
    if xn:
        parents.append(x)
        vjps.append(lambda g, xv=xv, yv=yv: _unbroadcast(vjp_x(g, xv, yv), xv.shape))
    if yn:
        parents.append(y)
        vjps.append(lambda g, xv=xv, yv=yv: _unbroadcast(vjp_y(g, xv, yv), yv.shape))
    return Node(out, tuple(parents), tuple(vjps))


def _unary(x, fwd: Callable, vjp: Callable):
    if not isinstance(x, Node):
        return fwd(value_of(x))
    xv = x.value
    out = fwd(xv)
    return Node(out, (x,), (lambda g, xv=xv, out=out: vjp(g, xv, out),))


# -- arithmetic -------------------------------------------------------------

def add(x, y):
    return _binary(x, y, np.add, lambda g, xv, yv: g, lambda g, xv, yv: g)


def sub(x, y):
    return _binary(x, y, np.subtract, lambda g, xv, yv: g, lambda g, xv, yv: -g)


def mul(x, y):
    return _binary(x, y, np.multiply,
                   lambda g, xv, yv: g * yv,
                   lambda g, xv, yv: g * xv)


def div(x, y):
    return _binary(x, y, np.divide,
                   lambda g, xv, yv: g / yv,
                   lambda g, xv, yv: -g * xv / (yv * yv))


def scale(x, s: float):
    """Multiply by a python scalar constant."""
    return mul(x, float(s))


# -- linear algebra ---------------------------------------------------------

def linear(x, w):
    """``x @ w.T`` for ``x`` of shape (..., n) and weight ``w`` of shape (m, n)."""

    def fwd(xv, wv):
        return xv @ wv.T

    def vjp_x(g, xv, wv):
        return g @ wv

    def vjp_w(g, xv, wv):
        if g.ndim == 1:
            return np.outer(g, xv)
        gm = g.reshape(-1, g.shape[-1])
        xm = xv.reshape(-1, xv.shape[-1]) if xv.ndim > 1 else np.broadcast_to(xv, (gm.shape[0], xv.shape[-1]))
        return gm.T @ xm

    return _binary(x, w, fwd, vjp_x, vjp_w)


def dot(x, y):
    """Inner product along the last axis; output drops that axis."""
    return _binary(x, y, lambda xv, yv: np.sum(xv * yv, axis=-1),
                   lambda g, xv, yv: g[..., None] * yv,
                   lambda g, xv, yv: g[..., None] * xv)


def norm(x):
    """Euclidean norm along the last axis, keepdims; safe gradient at 0."""

    def fwd(xv):
        return np.sqrt(np.sum(xv * xv, axis=-1, keepdims=True))

    def vjp(g, xv, out):
        return g * xv / np.maximum(out, _SAFE_EPS)

    return _unary(x, fwd, vjp)


def sum_all(x):
    """Scalar sum of every element."""
    return _unary(x, np.sum, lambda g, xv, out: np.broadcast_to(g, xv.shape).copy())


def sum_last(x):
    """Sum along the last axis, keepdims (broadcasts cleanly against x)."""
    return _unary(x, lambda xv: np.sum(xv, axis=-1, keepdims=True),
                  lambda g, xv, out: np.broadcast_to(g, xv.shape).copy())


def concat(parts, axis=-1):
    """Concatenate a sequence of tensors along ``axis``."""
    if not any(isinstance(p, Node) for p in parts):
        return np.concatenate([value_of(p) for p in parts], axis=axis)
    values = [value_of(p) for p in parts]
    out = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)
    parents, vjps = [], []
    for i, p in enumerate(parts):
        if not isinstance(p, Node):
            continue
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g, lo=lo, hi=hi):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]

        parents.append(p)
        vjps.append(vjp)
    return Node(out, tuple(parents), tuple(vjps))


# -- nonlinearities ---------------------------------------------------------

def tanh(x):
    return _unary(x, np.tanh, lambda g, xv, out: g * (1.0 - out * out))


def atanh(x):
    """Inverse hyperbolic tangent with the argument clamped away from +-1."""

    def fwd(xv):
        return np.arctanh(np.clip(xv, -_ATANH_LIMIT, _ATANH_LIMIT))

    def vjp(g, xv, out):
        xc = np.clip(xv, -_ATANH_LIMIT, _ATANH_LIMIT)
        return g / (1.0 - xc * xc)

    return _unary(x, fwd, vjp)


def sigmoid(x):
    def fwd(xv):
        return 0.5 * (1.0 + np.tanh(0.5 * xv))

    return _unary(x, fwd, lambda g, xv, out: g * out * (1.0 - out))


def softsign(x):
    def fwd(xv):
        return xv / (1.0 + np.abs(xv))

    def vjp(g, xv, out):
        d = 1.0 + np.abs(xv)
        return g / (d * d)

    return _unary(x, fwd, vjp)


def softmax(x):
    """Softmax along the last axis (stable under large inputs)."""

    def fwd(xv):
        z = xv - xv.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def vjp(g, xv, out):
        return out * (g - np.sum(g * out, axis=-1, keepdims=True))

    return _unary(x, fwd, vjp)


def exp(x):
    return _unary(x, np.exp, lambda g, xv, out: g * out)


def log(x):
    return _unary(x, np.log, lambda g, xv, out: g / xv)


def clamp(x, lo=None, hi=None):
    """Elementwise clamp; gradient is masked outside the active range."""

    def fwd(xv):
        return np.clip(xv, lo, hi)

    def vjp(g, xv, out):
        mask = np.ones_like(xv)
        if lo is not None:
            mask = mask * (xv >= lo)
        if hi is not None:
            mask = mask * (xv <= hi)
        return g * mask

    return _unary(x, fwd, vjp)


def clamp_min(x, lo):
    return clamp(x, lo=lo)


def straight_through(x, fwd: Callable[[np.ndarray], np.ndarray]):
    """Apply ``fwd`` to the value but treat it as identity in the backward pass.

    Used for the ball-boundary projection, which only activates in a
    measure-zero safety region.
    """
    if not isinstance(x, Node):
        return fwd(value_of(x))
    return Node(fwd(x.value), (x,), (lambda g: g,))


# -- backward pass ----------------------------------------------------------

def _reachable(root: Node):
    seen = set()
    stack = [root]
    out = []
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        out.append(node)
        stack.extend(node.parents)
    out.sort(key=lambda n: n.order, reverse=True)
    return out


def backward(root: Node, params: Optional[Dict[str, Node]] = None) -> Gradient:
    """Accumulate d(root)/d(leaf) for every named leaf reachable from ``root``.

    ``root`` must be scalar-valued.  When ``params`` is given, the result has
    one entry per parameter, with zeros for parameters the graph never used.
    """
    if not isinstance(root, Node):
        raise TypeError("backward expects a Node root")
    if root.value.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
    nodes = _reachable(root)
    for node in nodes:
        node.grad = None
    root.grad = np.ones_like(root.value)
    grads: Gradient = {}
    for node in nodes:
        g = node.grad
        if g is None:
            continue
        if node.name is not None and not node.parents:
            grads[node.name] = g
        for parent, vjp in zip(node.parents, node.vjps):
            pg = vjp(g)
            if parent.grad is None:
                parent.grad = pg.copy() if isinstance(pg, np.ndarray) else np.asarray(pg)
            else:
                parent.grad = parent.grad + pg
    if params is not None:
        return {k: grads.get(k, np.zeros_like(v.value)) for k, v in params.items()}
    return grads


def finite_diff_check(fn, params: Dict[str, np.ndarray], h: float = 1e-5):
    """Compare the taped gradient of ``fn`` against central finite differences.

    ``fn`` maps a dict of tensors to a scalar and must accept either plain
    arrays or ``Node`` leaves.  The relative error is the elementwise
    difference normalized by the largest gradient magnitude across all
    parameters (floored at 1e-8 so an identically zero gradient compares
    clean).  Returns ``(max_rel_err, per_param_max)``.
    """
    leaves = {k: Node.param(k, v) for k, v in params.items()}
    root = fn(leaves)
    analytic = backward(root, leaves)

    numeric: Dict[str, np.ndarray] = {}
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    for name, tensor in work.items():
        fd = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(value_of(fn(work)))
            flat[i] = orig - h
            fm = float(value_of(fn(work)))
            flat[i] = orig
            fd_flat[i] = (fp - fm) / (2.0 * h)
        numeric[name] = fd

    scale_ref = max(
        max((np.max(np.abs(a)) for a in analytic.values()), default=0.0),
        max((np.max(np.abs(f)) for f in numeric.values()), default=0.0),
        1e-8,
    )
    per_param = {
        name: float(np.max(np.abs(analytic[name] - numeric[name])) / scale_ref)
        for name in params
    }
    max_err = max(per_param.values(), default=0.0)
    return max_err, per_param
