"""Dense float64 reverse-mode autodiff on numpy arrays.

Tensors form an acyclic graph; backward() walks it once in reverse
topological order and accumulates gradients into every node that
requires them.  Per-pass gradients are kept in a scratch map so that
calling backward() twice without a reset adds two full passes instead
of compounding stale intermediate gradients.
"""

import numpy as np

from . import kernels

_grad_enabled = True


class no_grad:
    """Context manager that skips graph construction (inference passes)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp", "op")

    # ndarray <op> Tensor must dispatch to our reflected methods, not ufuncs.
    __array_ufunc__ = None

    def __init__(self, value, requires_grad=False, parents=(), vjp=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjp = vjp
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, op={self.op})"

    def backward(self):
        """Accumulate d(self)/d(node) into .grad of every reachable node."""
        if self.value.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.value.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))
        # Fresh per-pass gradients; fold into persistent .grad at visit time.
        pass_grad = {id(self): np.ones_like(self.value)}
        for node in reversed(topo):
            g = pass_grad.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pass_grad:
                    pass_grad[key] = pass_grad[key] + pg
                else:
                    pass_grad[key] = pg

    def zero_grad(self):
        self.grad = None

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, vjp, op):
    req = _grad_enabled and any(p.requires_grad for p in parents)
    if not req:
        return Tensor(value, op=op)
    return Tensor(value, requires_grad=True, parents=parents, vjp=vjp, op=op)


def _unbroadcast(grad, shape):
    """Reduce a broadcasted gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.value + b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return _make(out, (a, b), vjp, "add")


def neg(a):
    a = as_tensor(a)
    return _make(-a.value, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.value * b.value

    def vjp(g):
        return (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        )

    return _make(out, (a, b), vjp, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value

    def vjp(g):
        return (
            _unbroadcast(g / b.value, a.value.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        )

    return _make(out, (a, b), vjp, "div")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.value.shape} @ {b.value.shape}")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul inner extents disagree: {a.value.shape} @ {b.value.shape}")
    out = a.value @ b.value

    def vjp(g):
        return g @ b.value.T, a.value.T @ g

    return _make(out, (a, b), vjp, "matmul")


def sigmoid(a):
    a = as_tensor(a)
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), vjp, "sigmoid")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.value)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), vjp, "tanh")


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.value, 0.0)

    def vjp(g):
        return (g * (a.value > 0),)

    return _make(out, (a,), vjp, "relu")


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    out = np.where(a.value > 0, a.value, slope * a.value)

    def vjp(g):
        return (g * np.where(a.value > 0, 1.0, slope),)

    return _make(out, (a,), vjp, "leaky_relu")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.value)

    def vjp(g):
        return (g * out,)

    return _make(out, (a,), vjp, "exp")


def log(a, floor=None):
    """Natural log; with ``floor`` the argument is clamped from below first."""
    a = as_tensor(a)
    x = a.value if floor is None else np.maximum(a.value, floor)
    out = np.log(x)

    def vjp(g):
        if floor is None:
            return (g / x,)
        return (g * (a.value >= floor) / x,)

    return _make(out, (a,), vjp, "log")


def softmax(a, axis=-1):
    a = as_tensor(a)
    x = a.value
    if x.shape[axis if axis >= 0 else x.ndim + axis] == 0:
        raise ShapeError("softmax over an empty axis")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), vjp, "softmax")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _make(out, tuple(tensors), vjp, "concat")


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.value.shape).copy(),)

    return _make(out, (a,), vjp, "sum")


def tensor_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.value.size if axis is None else a.value.shape[axis]
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    out = a.value.reshape(shape)

    def vjp(g):
        return (g.reshape(a.value.shape),)

    return _make(out, (a,), vjp, "reshape")


def gather_rows(a, idx):
    """Select rows by integer index; backward scatter-adds into the source."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = a.value[idx]
    n = a.value.shape[0]

    def vjp(g):
        return (kernels.index_add(g, idx, n).reshape(a.value.shape[:1] + g.shape[1:]),)

    return _make(out, (a,), vjp, "gather_rows")


def scatter_sum(a, idx, n_rows):
    """Sum rows of ``a`` into ``n_rows`` buckets; backward gathers."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = kernels.index_add(a.value, idx, n_rows)

    def vjp(g):
        return (g[idx],)

    return _make(out, (a,), vjp, "scatter_sum")


def slice_rows(a, start, stop):
    a = as_tensor(a)
    out = a.value[start:stop]

    def vjp(g):
        full = np.zeros_like(a.value)
        full[start:stop] = g
        return (full,)

    return _make(out, (a,), vjp, "slice_rows")


def sym_matmat(coo, a):
    """Apply a constant symmetric sparse operator (rows, cols, vals, n) to ``a``."""
    a = as_tensor(a)
    rows, cols, vals, n = coo
    out = kernels.coo_sym_matmat(rows, cols, vals, a.value, n)

    def vjp(g):
        return (kernels.coo_sym_matmat(rows, cols, vals, g, n),)

    return _make(out, (a,), vjp, "sym_matmat")
