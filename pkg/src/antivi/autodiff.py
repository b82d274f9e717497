"""Minimal reverse-mode automatic differentiation.

A :class:`Tape` records every operation applied to its :class:`Var` objects in
creation order, which is already a topological order, so the backward pass is a
single reverse sweep.  Node values are numpy arrays (a scalar is a 0-d array);
elementwise operations follow numpy broadcasting and the backward pass sums
gradients back onto the broadcast operand's shape.

The functional operations in this module (``exp``, ``sqrt``, ``cumsum`` ...)
accept either ``Var`` or plain numbers/arrays.  Plain input produces plain
numpy output, so the samplers and transforms can be written once and run both
on and off the tape.

Example::

    tape = Tape()
    x = tape.var(3.0)
    y = x * x
    tape.backward(y)[x]   # -> array(6.)
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from . import randkit
from .errors import NonFiniteError, TapeError

__all__ = [
    "Tape",
    "Var",
    "Gradients",
    "detach",
    "value_of",
    "finite_diff",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "tan",
    "fourth_root",
    "absolute",
    "softplus",
    "sigmoid",
    "relu",
    "clip",
    "normal_cdf",
    "chi2_cdf",
    "chi2_inverse_sf",
    "chi2_reflect",
    "sum",
    "mean",
    "matmul",
    "cumsum",
    "stack",
    "concatenate",
    "logsumexp",
]

def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Gradients(dict):
    """Map from leaf ``Var`` to gradient; unreached variables read as zero."""

    def __missing__(self, key):
        if isinstance(key, Var):
            return np.zeros_like(key.value)
        raise KeyError(key)


class Tape:
    """Append-only record of operations on its variables."""

    def __init__(self):
        self.nodes: list[Var] = []

    def __len__(self):
        return len(self.nodes)

    def var(self, value, name: str | None = None) -> Var:
        """Create a leaf variable that gradients are reported for."""
        return Var(np.array(value, dtype=float), self, (), (), "leaf", name)

    def vars(self, values: Iterable, prefix: str = "x") -> list[Var]:
        return [self.var(v, f"{prefix}{i}") for i, v in enumerate(values)]

    def backward(self, output: Var, grad_output=None) -> Gradients:
        """Reverse sweep from ``output``; returns gradients of every node reached.

        ``output`` must be a scalar unless ``grad_output`` (the upstream
        cotangent) is supplied.
        """
        if not isinstance(output, Var):
            raise TapeError("backward() needs a Var produced on this tape")
        if output.tape is not self or output.index >= len(self.nodes) or self.nodes[output.index] is not output:
            raise TapeError("output variable does not belong to this tape")
        if grad_output is None:
            if output.value.size != 1:
                raise TapeError("non-scalar output requires grad_output")
            seed = np.ones_like(output.value)
        else:
            seed = np.broadcast_to(np.asarray(grad_output, dtype=float), output.shape).copy()

        pending: dict[int, np.ndarray] = {output.index: seed}
        grads = Gradients()
        for idx in range(output.index, -1, -1):
            g = pending.pop(idx, None)
            if g is None:
                continue
            node = self.nodes[idx]
            if node.flagged:
                raise NonFiniteError(f"non-finite value produced by '{node.op}' reached backward", node.op)
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient flowing into '{node.op}'", node.op)
            grads[node] = g
            for parent, vjp in zip(node.parents, node.vjps):
                contrib = vjp(g)
                if parent.index in pending:
                    pending[parent.index] = pending[parent.index] + contrib
                else:
                    pending[parent.index] = contrib
        return grads

    def gradient(self, output: Var, wrt: Sequence[Var]) -> list[np.ndarray]:
        grads = self.backward(output)
        return [grads[v] for v in wrt]


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("value", "tape", "parents", "vjps", "op", "name", "index", "flagged", "__weakref__")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value, tape, parents, vjps, op, name=None):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjps = vjps
        self.op = op
        self.name = name
        self.flagged = not bool(np.all(np.isfinite(value)))
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __len__(self):
        return len(self.value)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Var({self.op}{label}, value={self.value!r})"

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return _binary(self, other, np.add, lambda g, a, b, o: g, lambda g, a, b, o: g, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract, lambda g, a, b, o: g, lambda g, a, b, o: -g, "sub")

    def __rsub__(self, other):
        return _binary(other, self, np.subtract, lambda g, a, b, o: g, lambda g, a, b, o: -g, "sub")

    def __mul__(self, other):
        return _binary(self, other, np.multiply, lambda g, a, b, o: g * b, lambda g, a, b, o: g * a, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(self, other, np.divide, lambda g, a, b, o: g / b, lambda g, a, b, o: -g * o / b, "div")

    def __rtruediv__(self, other):
        return _binary(other, self, np.divide, lambda g, a, b, o: g / b, lambda g, a, b, o: -g * o / b, "div")

    def __neg__(self):
        return _unary(self, -self.value, lambda g, x, o: -g, "neg")

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Var):
            return exp(log(self) * p)
        p = float(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.power(self.value, p)
        return _unary(self, out, lambda g, x, o: g * p * np.power(x, p - 1.0), "pow")

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        out = self.value[idx]
        shape = self.value.shape

        def vjp(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return full

        return Var(np.array(out, dtype=float), self.tape, (self,), (vjp,), "getitem")

    @property
    def T(self):
        return _unary(self, self.value.T, lambda g, x, o: g.T, "transpose")

    def reshape(self, *shape):
        old = self.value.shape
        return _unary(self, self.value.reshape(*shape), lambda g, x, o: g.reshape(old), "reshape")

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _tape_of(*args) -> Tape | None:
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise TapeError("operands belong to different tapes")
    return tape


def value_of(x):
    """Underlying numpy value of a ``Var``; identity for plain input."""
    return x.value if isinstance(x, Var) else x


def _unary(x: Var, out, dfn, op: str) -> Var:
    xv = x.value

    def vjp(g):
        return dfn(g, xv, out)

    return Var(np.asarray(out, dtype=float), x.tape, (x,), (vjp,), op)


def _binary(a, b, fn, da, db, op: str) -> Var:
    tape = _tape_of(a, b)
    av = np.asarray(value_of(a), dtype=float)
    bv = np.asarray(value_of(b), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.asarray(fn(av, bv), dtype=float)
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a)
        vjps.append(lambda g: _unbroadcast(np.asarray(da(g, av, bv, out)), av.shape))
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(np.asarray(db(g, av, bv, out)), bv.shape))
    return Var(out, tape, tuple(parents), tuple(vjps), op)


def _lift(fn: Callable, dfn: Callable, op: str):
    """Build a functional op from a numpy function and its local derivative.

    ``dfn(x, out)`` returns d out / d x elementwise.
    """

    def apply(x):
        if not isinstance(x, Var):
            return fn(np.asarray(x, dtype=float)) if np.ndim(x) else float(fn(np.asarray(x, dtype=float)))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = fn(x.value)
        return _unary(x, out, lambda g, xv, o: g * dfn(xv, o), op)

    apply.__name__ = op
    return apply


def _safe(fn):
    def wrapped(x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return fn(x)

    return wrapped


exp = _lift(np.exp, lambda x, o: o, "exp")
log = _lift(_safe(np.log), lambda x, o: 1.0 / x, "log")
sqrt = _lift(_safe(np.sqrt), lambda x, o: 0.5 / o, "sqrt")
tanh = _lift(np.tanh, lambda x, o: 1.0 - o * o, "tanh")
tan = _lift(np.tan, lambda x, o: 1.0 + o * o, "tan")
fourth_root = _lift(_safe(lambda x: np.power(x, 0.25)), lambda x, o: 0.25 / (o * o * o), "fourth_root")
absolute = _lift(np.abs, lambda x, o: np.sign(x), "abs")
softplus = _lift(lambda x: np.logaddexp(0.0, x), lambda x, o: 0.5 * (1.0 + np.tanh(0.5 * x)), "softplus")
sigmoid = _lift(lambda x: 0.5 * (1.0 + np.tanh(0.5 * x)), lambda x, o: o * (1.0 - o), "sigmoid")
relu = _lift(lambda x: np.maximum(x, 0.0), lambda x, o: (x > 0).astype(float), "relu")

_erfc = np.vectorize(math.erfc, otypes=[float])


def _std_normal_cdf(t):
    return 0.5 * _erfc(-np.asarray(t, dtype=float) / math.sqrt(2.0))


normal_cdf = _lift(_std_normal_cdf, lambda t, o: np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi), "normal_cdf")


def clip(x, lo: float, hi: float):
    """Clamp into ``[lo, hi]``; gradient is zero where clamping is active."""
    if not isinstance(x, Var):
        return np.clip(x, lo, hi)
    out = np.clip(x.value, lo, hi)
    return _unary(x, out, lambda g, xv, o: g * ((xv >= lo) & (xv <= hi)), "clip")


def chi2_cdf(x, dof: int):
    """Chi-squared CDF in its first argument; derivative is the density."""
    if not isinstance(x, Var):
        return randkit.chi2_cdf(x, dof)
    out = np.asarray(randkit.chi2_cdf(x.value, dof), dtype=float)
    return _unary(x, out, lambda g, xv, o: g * np.asarray(randkit.chi2_pdf(xv, dof)), "chi2_cdf")


def chi2_inverse_sf(q, dof: int):
    """Inverse survival function; differentiated by the implicit function theorem."""
    if not isinstance(q, Var):
        return randkit.chi2_inverse_sf(q, dof)
    out = np.asarray(randkit.chi2_inverse_sf(q.value, dof), dtype=float)
    return _unary(q, out, lambda g, qv, o: -g / np.asarray(randkit.chi2_pdf(o, dof)), "chi2_inverse_sf")


def _chi2_reflect_value(xv, dof, clamp):
    xv = np.asarray(xv, dtype=float)
    flat = xv.reshape(-1)
    p = np.atleast_1d(np.asarray(randkit.chi2_cdf(flat, dof), dtype=float))
    q = np.atleast_1d(np.asarray(randkit.chi2_sf(flat, dof), dtype=float))
    clamped = (p < clamp) | (q < clamp)
    lower = p <= q
    out = np.empty(flat.shape)
    if np.any(lower):
        out[lower] = randkit.chi2_inverse_sf(np.clip(p[lower], clamp, 1.0 - clamp), dof)
    if np.any(~lower):
        out[~lower] = randkit.chi2_inverse_cdf(np.clip(q[~lower], clamp, 1.0 - clamp), dof)
    return out.reshape(xv.shape), clamped.reshape(xv.shape)


def chi2_reflect(x, dof: int, clamp: float = 0.0):
    """``F^-1(1 - F(x))`` for the chi2(dof) CDF, evaluated in the smaller tail.

    Tail probabilities below ``clamp`` are raised to it; the derivative is zero there.
    """
    out, clamped = _chi2_reflect_value(value_of(x), dof, clamp)
    if not isinstance(x, Var):
        return float(out) if out.ndim == 0 else out

    def dfn(g, xv, o):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -np.asarray(randkit.chi2_pdf(xv, dof)) / np.asarray(randkit.chi2_pdf(o, dof))
        return g * np.where(clamped, 0.0, d)

    return _unary(x, out, dfn, "chi2_reflect")


def detach(x):
    """Same value, no gradient path back to ``x``."""
    if not isinstance(x, Var):
        return x
    return Var(x.value.copy(), x.tape, (), (), "detach", x.name)


# reductions and structure ---------------------------------------------------


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    if not isinstance(x, Var):
        return np.sum(x, axis=axis, keepdims=keepdims)
    shape = x.shape
    out = np.sum(x.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return Var(np.asarray(out, dtype=float), x.tape, (x,), (vjp,), "sum")


def mean(x, axis=None, keepdims=False):
    n = np.size(value_of(x)) if axis is None else np.prod([np.shape(value_of(x))[a] for a in np.atleast_1d(axis)])
    return sum(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def matmul(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return np.matmul(a, b)
    av = np.asarray(value_of(a), dtype=float)
    bv = np.asarray(value_of(b), dtype=float)
    out = np.matmul(av, bv)
    parents, vjps = [], []

    def grad_a(g):
        if bv.ndim == 1:
            return np.multiply.outer(g, bv) if av.ndim > 1 else g * bv
        if av.ndim == 1:
            return bv @ g
        return _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)

    def grad_b(g):
        if av.ndim == 1:
            return np.multiply.outer(av, g) if bv.ndim > 1 else g * av
        if bv.ndim == 1:
            return np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)

    if isinstance(a, Var):
        parents.append(a)
        vjps.append(grad_a)
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(grad_b)
    return Var(np.asarray(out, dtype=float), tape, tuple(parents), tuple(vjps), "matmul")


def cumsum(x, axis=0):
    if not isinstance(x, Var):
        return np.cumsum(x, axis=axis)
    out = np.cumsum(x.value, axis=axis)
    return _unary(x, out, lambda g, xv, o: np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis), "cumsum")


def stack(items: Sequence, axis=0):
    tape = _tape_of(*items)
    shapes = [np.shape(value_of(v)) for v in items]
    common = np.broadcast_shapes(*shapes)
    values = [np.broadcast_to(np.asarray(value_of(v), dtype=float), common) for v in items]
    if tape is None:
        return np.stack(values, axis=axis)
    out = np.stack(values, axis=axis)
    parents, vjps = [], []
    for i, item in enumerate(items):
        if isinstance(item, Var):
            parents.append(item)
            vjps.append(lambda g, i=i, s=shapes[i]: _unbroadcast(np.take(g, i, axis=axis), s))
    return Var(out, tape, tuple(parents), tuple(vjps), "stack")


def concatenate(items: Sequence, axis=0):
    tape = _tape_of(*items)
    values = [np.asarray(value_of(v), dtype=float) for v in items]
    if tape is None:
        return np.concatenate(values, axis=axis)
    out = np.concatenate(values, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])
    parents, vjps = [], []
    for i, item in enumerate(items):
        if isinstance(item, Var):
            sl = slice(int(bounds[i]), int(bounds[i + 1]))
            parents.append(item)
            vjps.append(lambda g, sl=sl: np.take(g, np.arange(sl.start, sl.stop), axis=axis))
    return Var(out, tape, tuple(parents), tuple(vjps), "concatenate")


def logsumexp(x, axis=None):
    xv = np.asarray(value_of(x), dtype=float)
    m = np.max(xv, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(xv - m), axis=axis, keepdims=True)) + m
    squeezed = out.reshape(()) if axis is None else np.squeeze(out, axis=axis)
    if not isinstance(x, Var):
        return squeezed if np.ndim(squeezed) else float(squeezed)

    def vjp(g):
        g = np.asarray(g).reshape(out.shape) if axis is None else np.expand_dims(g, axis)
        return g * np.exp(xv - out)

    return Var(np.asarray(squeezed, dtype=float), x.tape, (x,), (vjp,), "logsumexp")


# finite differences -----------------------------------------------------------


def finite_diff(f: Callable, x, h: float = 1e-6) -> np.ndarray | float:
    """Central-difference gradient of a scalar function at ``x``."""
    x = np.array(x, dtype=float)
    if x.ndim == 0:
        return (float(f(x + h)) - float(f(x - h))) / (2.0 * h)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (float(f(xp)) - float(f(xm))) / (2.0 * h)
    return grad
