"""Reverse-mode automatic differentiation on dense float64 arrays.

A small tape engine in the micrograd tradition: every operation returns a
new ``Var`` holding the result plus a closure that maps the output adjoint
back to the operands.  The graph is rebuilt on every forward pass, so the
set of recorded ops can change freely between training steps.

Conventions:

* values are float64 and row-major; any op whose result contains NaN or
  Inf raises ``NumericError`` immediately;
* elementwise ops follow numpy broadcasting, and gradients are summed
  back over the broadcast axes;
* ``backward`` accumulates into ``Var.grad`` of trainable nodes, so two
  backward passes without ``zero_grad`` give exactly twice the gradient.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class NumericError(ArithmeticError):
    """A non-finite value was produced, or an op left its domain."""


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (pure value computation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Var:
    """A float64 array with an accumulated gradient and a tape record.

    Leaves are built directly (``Var(data, trainable=True)`` for learnable
    parameters); interior nodes are built by the ops below.  ``grad``
    always has the same shape as ``data`` and is all zeros right after
    construction or ``zero_grad``.
    """

    __slots__ = ("data", "grad", "trainable", "name", "_parents", "_vjp")

    # make `ndarray <op> Var` fall back to the reflected Var operators
    __array_ufunc__ = None

    def __init__(self, data, trainable=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in Var {name or ''!s}")
        self.data = arr
        self.grad = np.zeros_like(arr)
        self.trainable = bool(trainable)
        self.name = name
        self._parents = ()
        self._vjp = None

    # -- basic introspection -------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        tag = self.name or ("param" if self.trainable else "var")
        return f"Var({tag}, shape={self.data.shape})"

    # -- operator sugar ------------------------------------------------

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return vmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def lift(x) -> Var:
    """Wrap scalars/arrays as constant (non-trainable) Vars."""
    return x if isinstance(x, Var) else Var(x)


def _out(data, parents, vjp, op: str) -> Var:
    """Build an op result, validating finiteness and recording the tape."""
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {op}")
    v = Var.__new__(Var)
    v.data = arr
    v.grad = np.zeros_like(arr)
    v.trainable = False
    v.name = None
    if _GRAD_ENABLED:
        v._parents = tuple(parents)
        v._vjp = vjp
    else:
        v._parents = ()
        v._vjp = None
    return v


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting introduced."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


def _broadcast_check(a: Var, b: Var, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise arithmetic ---------------------------------------------


def add(a, b):
    a, b = lift(a), lift(b)
    _broadcast_check(a, b, "add")

    def vjp(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))]

    return _out(a.data + b.data, (a, b), vjp, "add")


def sub(a, b):
    a, b = lift(a), lift(b)
    _broadcast_check(a, b, "sub")

    def vjp(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape))]

    return _out(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b):
    a, b = lift(a), lift(b)
    _broadcast_check(a, b, "mul")

    def vjp(g):
        return [(a, _unbroadcast(g * b.data, a.shape)), (b, _unbroadcast(g * a.data, b.shape))]

    return _out(a.data * b.data, (a, b), vjp, "mul")


def div(a, b):
    a, b = lift(a), lift(b)
    _broadcast_check(a, b, "div")

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return [(a, ga), (b, gb)]

    return _out(a.data / b.data, (a, b), vjp, "div")


def power(a, exponent: float):
    a = lift(a)
    p = float(exponent)

    def vjp(g):
        return [(a, g * p * np.power(a.data, p - 1.0))]

    return _out(np.power(a.data, p), (a,), vjp, f"power({p})")


def sqrt(a):
    return power(a, 0.5)


# -- activations and transcendentals ------------------------------------


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = lift(a)
    s = _stable_sigmoid(a.data)

    def vjp(g):
        return [(a, g * s * (1.0 - s))]

    return _out(s, (a,), vjp, "sigmoid")


def log(a):
    a = lift(a)
    if np.any(a.data <= 0.0):
        raise NumericError("log of non-positive value (clamp inputs first)")

    def vjp(g):
        return [(a, g / a.data)]

    return _out(np.log(a.data), (a,), vjp, "log")


def exp(a):
    a = lift(a)
    e = np.exp(a.data)

    def vjp(g):
        return [(a, g * e)]

    return _out(e, (a,), vjp, "exp")


def clip(a, lo: float, hi: float):
    """Clamp values to [lo, hi]; gradient passes through unclamped entries."""
    a = lift(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        return [(a, g * inside)]

    return _out(np.clip(a.data, lo, hi), (a,), vjp, "clip")


def softmax(a, axis: int):
    """Numerically stable softmax along one axis; rows sum to 1."""
    a = lift(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return [(a, s * (g - inner))]

    return _out(s, (a,), vjp, "softmax")


# -- reductions and structure -------------------------------------------


def vsum(a, axis=None, keepdims=False):
    a = lift(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis=axis)
        return [(a, np.broadcast_to(g, a.shape).copy())]

    return _out(out, (a,), vjp, "sum")


def vmean(a, axis=None, keepdims=False):
    a = lift(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size if axis is None else a.data.shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis=axis)
        return [(a, np.broadcast_to(g, a.shape) / n)]

    return _out(out, (a,), vjp, "mean")


def reshape(a, shape):
    a = lift(a)

    def vjp(g):
        return [(a, g.reshape(a.shape))]

    return _out(a.data.reshape(shape), (a,), vjp, "reshape")


def take(a, idx):
    """Indexing/slicing; backward scatters adjoints with np.add.at."""
    a = lift(a)

    def vjp(g):
        ga = np.zeros(a.shape)
        np.add.at(ga, idx, g)
        return [(a, ga)]

    return _out(a.data[idx], (a,), vjp, "take")


def where(cond: np.ndarray, a, b):
    """Select a where cond else b; cond is a constant boolean mask.

    Values and gradients pass through the selected branch bit-exactly;
    the unselected branch receives an exactly-zero gradient.
    """
    a, b = lift(a), lift(b)
    cond = np.asarray(cond, dtype=bool)

    def vjp(g):
        ga = _unbroadcast(np.where(cond, g, 0.0), a.shape)
        gb = _unbroadcast(np.where(cond, 0.0, g), b.shape)
        return [(a, ga), (b, gb)]

    return _out(np.where(cond, a.data, b.data), (a, b), vjp, "where")


# -- contractions --------------------------------------------------------


def matmul(a, b):
    a, b = lift(a), lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")

    def vjp(g):
        return [(a, g @ b.data.T), (b, a.data.T @ g)]

    return _out(a.data @ b.data, (a, b), vjp, "matmul")


def einsum(subscripts: str, a, b):
    """Two-operand einsum with einsum-based backward.

    Restricted to contractions where every index of one operand appears
    in the output or the other operand, and no index repeats within a
    single subscript (no traces/diagonals).
    """
    a, b = lift(a), lift(b)
    try:
        lhs, out_sub = subscripts.replace(" ", "").split("->")
        sub_a, sub_b = lhs.split(",")
    except ValueError:
        raise ShapeError(f"einsum spec {subscripts!r} must look like 'ab,bc->ac'") from None
    for s in (sub_a, sub_b, out_sub):
        if len(set(s)) != len(s):
            raise ShapeError(f"einsum spec {subscripts!r}: repeated index within one operand")
    if not set(sub_a) <= set(out_sub) | set(sub_b) or not set(sub_b) <= set(out_sub) | set(sub_a):
        raise ShapeError(f"einsum spec {subscripts!r}: an operand index is unrecoverable in backward")
    try:
        out = np.einsum(subscripts, a.data, b.data)
    except ValueError as err:
        raise ShapeError(f"einsum {subscripts!r}: {err} (shapes {a.shape}, {b.shape})") from None

    def vjp(g):
        ga = np.einsum(f"{out_sub},{sub_b}->{sub_a}", g, b.data)
        gb = np.einsum(f"{out_sub},{sub_a}->{sub_b}", g, a.data)
        return [(a, ga), (b, gb)]

    return _out(out, (a, b), vjp, f"einsum({subscripts})")


def cosine(u, v, eps: float = 1e-12):
    """Cosine similarity of two 1-d vectors, norms guarded by eps."""
    u, v = lift(u), lift(v)
    if u.ndim != 1 or v.ndim != 1:
        raise ShapeError(f"cosine expects 1-d vectors, got {u.shape} and {v.shape}")
    if u.shape != v.shape:
        raise ShapeError(f"cosine: vector lengths differ, {u.shape} vs {v.shape}")
    dot = (u * v).sum()
    nu = sqrt((u * u).sum()) + eps
    nv = sqrt((v * v).sum()) + eps
    return dot / (nu * nv)


# -- backward pass -------------------------------------------------------


def _topological_order(root: Var) -> list:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root: Var):
    """Accumulate d(root)/d(param) into every trainable Var reachable from root.

    Adjoints live in a per-call table, so repeated calls on the same tape
    add independent copies of the gradient (exactly 2x after two calls).
    """
    if root.size != 1:
        raise ShapeError(f"backward requires a scalar root, got shape {root.shape}")
    order = _topological_order(root)
    adjoints = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = adjoints.pop(id(node), None)
        if g is None:
            continue
        if node.trainable:
            node.grad += g.reshape(node.grad.shape)
        if node._vjp is None:
            continue
        for parent, pg in node._vjp(g):
            if not np.all(np.isfinite(pg)):
                raise NumericError("non-finite gradient during backward")
            key = id(parent)
            if key in adjoints:
                adjoints[key] = adjoints[key] + pg
            else:
                adjoints[key] = pg


def zero_grads(params):
    """Zero the gradients of an iterable (or mapping) of Vars."""
    vals = params.values() if hasattr(params, "values") else params
    for p in vals:
        p.zero_grad()
