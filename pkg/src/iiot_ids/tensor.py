"""Dense float64 tensors with define-by-run reverse-mode autodiff.

Only scalar scaling broadcasts implicitly. Adding a bias vector along the
last axis is an explicit op (:func:`add_bias`), so the gradient surface stays
small and every op can be checked against finite differences.
"""
import math
import threading
from contextlib import contextmanager

import numpy as np

from .errors import ContractError, DimensionError, NumericError

_local = threading.local()


def is_grad_enabled():
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


def _check_finite(arr, where):
    # a finite sum proves every element finite; only fall back when it is not
    if not math.isfinite(np.add.reduce(arr, axis=None)) and not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {where}")


class Tensor:
    """An n-dimensional float64 array plus the bookkeeping for backprop.

    ``grad`` is a plain ndarray of the same shape, filled by :meth:`backward`
    on leaves that have ``requires_grad`` set.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "tensor input" if name is None else name)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward_fn = None
        self._op = None

    @classmethod
    def _from_op(cls, data, op):
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = False
        t.name = None
        t._parents = ()
        t._backward_fn = None
        t._op = op
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._parents:
                for parent, pg in zip(node._parents, node._backward_fn(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            elif node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g


def _topological_order(root):
    order, seen = [], set()
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data, parents, backward, op):
    """Wrap an op result, recording it in the graph when gradients are needed.

    ``backward`` maps the output gradient to a tuple with one entry (ndarray
    or None) per parent.
    """
    _check_finite(data, op)
    out = Tensor._from_op(data, op)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward
    return out


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return make_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    return make_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(a, s):
    a = as_tensor(a)
    s = float(s)
    return make_op(a.data * s, (a,), lambda g: (g * s,), "scale")


def sigmoid(a):
    a = as_tensor(a)
    y = 0.5 + 0.5 * np.tanh(0.5 * a.data)
    return make_op(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return make_op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(a):
    a = as_tensor(a)
    y = np.maximum(a.data, 0.0)
    return make_op(y, (a,), lambda g: (g * (y > 0),), "relu")


def add_bias(x, b):
    """``x + b`` with ``b`` a vector matching the last axis of ``x``."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"add_bias: shapes {x.shape} and {b.shape} are incompatible")
    axes = tuple(range(x.ndim - 1))
    return make_op(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=axes)), "add_bias")


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    """``a @ b`` for ``a`` of shape (..., k) and a 2-D ``b`` of shape (k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    out = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T
        k = a.shape[-1]
        gb = a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_op(out, (a, b), backward, "matmul")


def bmm(a, b):
    """Batched product of (B, m, k) and (B, k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm: shapes {a.shape} and {b.shape} are incompatible")
    out = np.matmul(a.data, b.data)

    def backward(g):
        return (
            np.matmul(g, b.data.transpose(0, 2, 1)),
            np.matmul(a.data.transpose(0, 2, 1), g),
        )

    return make_op(out, (a, b), backward, "bmm")


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_op(
        np.ascontiguousarray(a.data.transpose(axes)),
        (a,),
        lambda g: (g.transpose(inverse),),
        "transpose",
    )


def softmax(x, axis=-1):
    """Softmax along ``axis`` with max subtraction."""
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op(y, (x,), backward, "softmax")


# -- reductions and structure -----------------------------------------------

def sum(x):
    x = as_tensor(x)
    shape = x.shape
    return make_op(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),), "sum")


def mean(x):
    x = as_tensor(x)
    n = x.size
    shape = x.shape
    return make_op(
        np.array(x.data.sum() / n), (x,), lambda g: (np.full(shape, float(g) / n),), "mean"
    )


def reshape(x, shape):
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size or any(s < 0 for s in shape):
        raise DimensionError(f"reshape: cannot map shape {x.shape} to {shape}")
    old = x.shape
    return make_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def concatenate(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise DimensionError("concatenate: no inputs")
    ndim = xs[0].ndim
    ax = axis % ndim
    for x in xs[1:]:
        if x.ndim != ndim or any(
            x.shape[d] != xs[0].shape[d] for d in range(ndim) if d != ax
        ):
            raise DimensionError(
                f"concatenate: shapes {xs[0].shape} and {x.shape} disagree off axis {axis}"
            )
    sizes = [x.shape[ax] for x in xs]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([x.data for x in xs], axis=ax)

    def backward(g):
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * ndim
            idx[ax] = slice(lo, hi)
            parts.append(g[tuple(idx)])
        return tuple(parts)

    return make_op(out, xs, backward, "concatenate")


def take(x, index):
    """Indexing, e.g. ``take(seq, (slice(None), -1))``; repeated indices accumulate."""
    x = as_tensor(x)
    out = np.array(x.data[index])
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return make_op(out, (x,), backward, "take")
