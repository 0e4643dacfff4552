"""Tape-free reverse-mode differentiation over numpy arrays.

Every primitive accepts plain ``ndarray`` or :class:`Var` inputs. With no
``Var`` among the inputs the primitive just computes the value, so the same
model code runs on the fast no-gradient path and inside :func:`grad`.

Backward functions return plain arrays, which means gradients are
first-order only. Quantities that need a derivative of a derivative (the
vector-Jacobian product inside the stability penalty) are written out
explicitly in terms of primitives such as :func:`dswish`, whose own
derivative is registered.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import math

import numpy as np


class NumericError(FloatingPointError):
    """A primitive produced a non-finite value."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite value produced by '{op}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ShapeError(ValueError):
    pass


class Var:
    __slots__ = ("value", "parents", "op")

    __array_priority__ = 100.0

    def __init__(self, value, parents=(), op: str = "leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(op={self.op!r}, shape={self.value.shape})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)


def value(x):
    return x.value if isinstance(x, Var) else x


def _val(x):
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _finite(a) -> bool:
    # a single reduction; a sum is finite iff every entry is (barring overflow)
    return math.isfinite(np.add.reduce(a, axis=None)) if a.size else True


# Per-primitive finiteness checks are off on the hot path; value_and_grad
# re-runs a failing evaluation with them on to name the offending primitive.
_checking = False


def _emit(out, op, parents):
    if _checking and not _finite(out):
        raise NumericError(op)
    live = tuple((p, fn) for p, fn in parents if isinstance(p, Var))
    if not live:
        return out
    return Var(out, live, op)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --- elementwise -----------------------------------------------------------


def add(a, b):
    av, bv = _val(a), _val(b)
    return _emit(
        av + bv,
        "add",
        ((a, lambda g: _unbroadcast(g, av.shape)), (b, lambda g: _unbroadcast(g, bv.shape))),
    )


def sub(a, b):
    av, bv = _val(a), _val(b)
    return _emit(
        av - bv,
        "sub",
        ((a, lambda g: _unbroadcast(g, av.shape)), (b, lambda g: -_unbroadcast(g, bv.shape))),
    )


def mul(a, b):
    av, bv = _val(a), _val(b)
    return _emit(
        av * bv,
        "mul",
        ((a, lambda g: _unbroadcast(g * bv, av.shape)), (b, lambda g: _unbroadcast(g * av, bv.shape))),
    )


def neg(a):
    return _emit(-_val(a), "neg", ((a, lambda g: -g),))


def square(a):
    av = _val(a)
    return _emit(av * av, "square", ((a, lambda g: 2.0 * av * g),))


def absolute(a):
    av = _val(a)
    return _emit(np.abs(av), "abs", ((a, lambda g: np.sign(av) * g),))


def _sigmoid(x):
    # tanh form: overflow-free and faster than exp-based expit
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def swish(a):
    av = _val(a)
    s = _sigmoid(av)
    return _emit(av * s, "swish", ((a, lambda g: g * (s + av * s * (1.0 - s))),))


def dswish(a):
    """Derivative of swish, itself differentiable."""
    av = _val(a)
    s = _sigmoid(av)
    out = s + av * s * (1.0 - s)
    return _emit(out, "dswish", ((a, lambda g: g * s * (1.0 - s) * (2.0 + av * (1.0 - 2.0 * s))),))


# --- linear algebra and reductions -----------------------------------------


def matmul(a, b):
    av, bv = _val(a), _val(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul shapes {av.shape} and {bv.shape} do not chain")
    return _emit(av @ bv, "matmul", ((a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)))


def transpose(a):
    return _emit(_val(a).T, "transpose", ((a, lambda g: g.T),))


def total(a):
    av = _val(a)
    return _emit(np.asarray(av.sum()), "sum", ((a, lambda g: np.broadcast_to(g, av.shape).copy()),))


def row_sum(a):
    av = _val(a)
    return _emit(av.sum(axis=1), "row_sum", ((a, lambda g: np.repeat(g[:, None], av.shape[1], axis=1)),))


def mean(a):
    av = _val(a)
    n = av.size
    return _emit(np.asarray(av.mean()), "mean", ((a, lambda g: np.full(av.shape, float(g) / n)),))


def cols(a, start, stop=None):
    av = _val(a)
    stop = av.shape[1] if stop is None else stop

    def back(g):
        out = np.zeros_like(av)
        out[:, start:stop] = g
        return out

    return _emit(av[:, start:stop], "cols", ((a, back),))


def rows(a, start, stop=None):
    av = _val(a)
    stop = av.shape[0] if stop is None else stop

    def back(g):
        out = np.zeros_like(av)
        out[start:stop] = g
        return out

    return _emit(av[start:stop], "rows", ((a, back),))


def concat_cols(parts: Sequence):
    vals = [_val(p) for p in parts]
    edges = np.cumsum([0] + [v.shape[1] for v in vals])
    parents = tuple(
        (p, (lambda g, lo=lo, hi=hi: g[:, lo:hi])) for p, lo, hi in zip(parts, edges[:-1], edges[1:])
    )
    return _emit(np.concatenate(vals, axis=1), "concat_cols", parents)


def pairwise_dist(a):
    """Euclidean distance matrix between the rows of ``a``.

    The gradient at coincident rows (including the diagonal) is taken as 0.
    """
    av = _val(a)
    diff = av[:, None, :] - av[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    def back(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(d > 0, (g + g.T) / d, 0.0)
        return w.sum(axis=1)[:, None] * av - w @ av

    return _emit(d, "pairwise_dist", ((a, back),))


# registered primitives, used by the finite-difference property tests
PRIMITIVES: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "square": square,
    "abs": absolute,
    "swish": swish,
    "dswish": dswish,
    "matmul": matmul,
    "transpose": transpose,
    "sum": total,
    "row_sum": row_sum,
    "mean": mean,
    "cols": cols,
    "rows": rows,
    "concat_cols": concat_cols,
    "pairwise_dist": pairwise_dist,
}


# --- driver ----------------------------------------------------------------


def backward(root: Var, leaves: Iterable[Var]) -> list[np.ndarray]:
    """Accumulate d(root)/d(leaf) for each leaf, in the order given."""
    order = []
    seen = set()
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
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or not node.parents:
            continue
        for parent, fn in node.parents:
            contrib = fn(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
    return [grads.get(id(leaf), np.zeros_like(leaf.value)) for leaf in leaves]


def checked(fn: Callable, *args):
    """Run ``fn(*args)`` with per-primitive finiteness checks enabled."""
    global _checking
    prev, _checking = _checking, True
    try:
        return fn(*args)
    finally:
        _checking = prev


def value_and_grad(loss_fn: Callable, params: Sequence[np.ndarray]):
    """Evaluate ``loss_fn(params)`` and its gradient with respect to each array.

    Raises :class:`NumericError` naming the first primitive that produced a
    non-finite value, if the loss or any gradient is non-finite.
    """
    leaves = [Var(p) for p in params]
    out = loss_fn(leaves)
    if not isinstance(out, Var):
        # loss does not depend on the parameters
        val = float(np.asarray(out))
        if not math.isfinite(val):
            raise NumericError("loss")
        return val, [np.zeros_like(np.asarray(p, dtype=np.float64)) for p in params]
    if out.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {out.value.shape}")
    val = float(out.value)
    grads = backward(out, leaves) if math.isfinite(val) else None
    if grads is None or not all(_finite(g) for g in grads):
        checked(loss_fn, [Var(p) for p in params])
        raise NumericError("backward", "gradient is non-finite")
    return val, grads


def grad(loss_fn: Callable, params: Sequence[np.ndarray]) -> list[np.ndarray]:
    return value_and_grad(loss_fn, params)[1]
