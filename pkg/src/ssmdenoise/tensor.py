"""Dense n-d array value type with reverse-mode differentiation.

A :class:`Tensor` wraps a row-major numpy array (float32 by default,
float64 for oracle and gradient-check runs) and records the operations
applied to it so that :meth:`Tensor.backward` can propagate gradients
through the whole computation.  Every operation validates that its output
is finite; a NaN or Inf raises :class:`NonFiniteError` at the offending
op instead of silently propagating.

Only scalar broadcasting is part of the public elementwise contract
(:func:`elementwise`); internal helpers use full numpy broadcasting with
gradient un-broadcasting, which the network layers rely on for biases
and affine norm parameters.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32

# Toggled off only in profiling runs; tests always run with checks on.
FINITE_CHECKS = True


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


def _check_finite(data: np.ndarray, op: str) -> None:
    if FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy-backed value in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        # ascontiguousarray would promote 0-d arrays to shape (1,)
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name
        _check_finite(self.data, "tensor")

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data)

    # -- graph construction --------------------------------------------------

    @staticmethod
    def _node(data, parents, backward, op):
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        parents = tuple(p for p in parents if isinstance(p, Tensor))
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def _accum(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, seed=None):
        """Reverse-mode pass from this node.

        `seed` defaults to ones; accumulation follows a fixed topological
        order, so repeated runs are bit-identical.
        """
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=self.data.dtype)
            if seed.shape != self.data.shape:
                raise ValueError("seed gradient shape mismatch")
        self._accum(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                _check_finite(node.grad, "backward")

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.data.shape))

        return Tensor._node(a.data + b.data, (a, b), bwd, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g, b.data.shape))

        return Tensor._node(a.data - b.data, (a, b), bwd, "sub")

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._node(a.data * b.data, (a, b), bwd, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._node(a.data / b.data, (a, b), bwd, "div")

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __neg__(self):
        a = self

        def bwd(g):
            if a.requires_grad:
                a._accum(-g)

        return Tensor._node(-a.data, (a,), bwd, "neg")

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.data.shape

        def bwd(g):
            if a.requires_grad:
                a._accum(g.reshape(old))

        return Tensor._node(np.ascontiguousarray(a.data.reshape(shape)), (a,), bwd, "reshape")

    def transpose(self, axes):
        a = self
        inv = np.argsort(axes)

        def bwd(g):
            if a.requires_grad:
                a._accum(np.ascontiguousarray(g.transpose(inv)))

        return Tensor._node(np.ascontiguousarray(a.data.transpose(axes)), (a,), bwd, "transpose")

    def flip(self, axis):
        """Reverse along one axis (the Flip operator on sequences)."""
        a = self

        def bwd(g):
            if a.requires_grad:
                a._accum(np.flip(g, axis=axis))

        return Tensor._node(np.ascontiguousarray(np.flip(a.data, axis=axis)), (a,), bwd, "flip")

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        shape = a.data.shape

        def bwd(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accum(np.broadcast_to(g, shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accum(np.broadcast_to(gg, shape).copy())

        return Tensor._node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd, "sum")

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else np.prod(
            [self.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
        )
        if n == 0:
            raise ValueError("mean over an empty reduction axis")
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def amax(self, axis=None, keepdims=False):
        a = self
        out = a.data.max(axis=axis, keepdims=keepdims)

        def bwd(g):
            if not a.requires_grad:
                return
            if axis is None:
                full = np.broadcast_to(out, a.data.shape)
                gg = np.broadcast_to(g, a.data.shape)
            else:
                full = out if keepdims else np.expand_dims(out, axis)
                gg = g if keepdims else np.expand_dims(g, axis)
                full = np.broadcast_to(full, a.data.shape)
                gg = np.broadcast_to(gg, a.data.shape)
            mask = (a.data == full).astype(a.data.dtype)
            # split gradient among ties for determinism
            if axis is None:
                mask = mask / mask.sum()
            else:
                mask = mask / mask.sum(axis=axis, keepdims=True)
            a._accum(gg * mask)

        return Tensor._node(out, (a,), bwd, "max")

    # -- pointwise nonlinearities ---------------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def bwd(g):
            if a.requires_grad:
                a._accum(g * out_data)

        return Tensor._node(out_data, (a,), bwd, "exp")

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)

        def bwd(g):
            if a.requires_grad:
                a._accum(g * (0.5 / out_data))

        return Tensor._node(out_data, (a,), bwd, "sqrt")

    def square(self):
        return self * self

    def sigmoid(self):
        a = self
        s = 1.0 / (1.0 + np.exp(-a.data))

        def bwd(g):
            if a.requires_grad:
                a._accum(g * s * (1.0 - s))

        return Tensor._node(s, (a,), bwd, "sigmoid")

    def silu(self):
        a = self
        s = 1.0 / (1.0 + np.exp(-a.data))
        out_data = a.data * s

        def bwd(g):
            if a.requires_grad:
                a._accum(g * (s + a.data * s * (1.0 - s)))

        return Tensor._node(out_data, (a,), bwd, "silu")

    def leaky_relu(self, slope=0.01):
        a = self
        # subgradient at 0 takes the positive-side slope 1
        factor = np.where(a.data >= 0, a.data.dtype.type(1.0), a.data.dtype.type(slope))

        def bwd(g):
            if a.requires_grad:
                a._accum(g * factor)

        return Tensor._node(a.data * factor, (a,), bwd, "leaky_relu")

    def softplus(self):
        a = self
        # overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|))
        out_data = np.maximum(a.data, 0) + np.log1p(np.exp(-np.abs(a.data)))
        s = 1.0 / (1.0 + np.exp(-a.data))

        def bwd(g):
            if a.requires_grad:
                a._accum(g * s)

        return Tensor._node(out_data, (a,), bwd, "softplus")

    # -- linear algebra --------------------------------------------------------

    def matmul(self, other):
        a, b = self, other
        if a.data.shape[-1] != b.data.shape[0]:
            raise ValueError(f"matmul inner dims differ: {a.shape} @ {b.shape}")

        def bwd(g):
            if a.requires_grad:
                a._accum(np.matmul(g, b.data.T).reshape(a.data.shape))
            if b.requires_grad:
                lhs = a.data.reshape(-1, a.data.shape[-1])
                b._accum(lhs.T @ g.reshape(-1, g.shape[-1]))

        return Tensor._node(np.matmul(a.data, b.data), (a, b), bwd, "matmul")

    def __matmul__(self, other):
        return self.matmul(other)

    # -- indexed gather/scatter ------------------------------------------------

    def take(self, indices, axis):
        """Gather along one axis with an integer index vector."""
        a = self
        idx = np.asarray(indices, dtype=np.intp)
        if idx.ndim != 1:
            raise ValueError("index list must be one-dimensional")
        if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[axis]):
            raise IndexError("gather index out of range")

        def bwd(g):
            if not a.requires_grad:
                return
            acc = np.zeros_like(a.data)
            gm = np.moveaxis(acc, axis, 0)
            np.add.at(gm, idx, np.moveaxis(g, axis, 0))
            a._accum(acc)

        return Tensor._node(np.ascontiguousarray(np.take(a.data, idx, axis=axis)), (a,), bwd, "gather")


# -- public tensor-core operations --------------------------------------------


def elementwise(op_tag: str, a: Tensor, b) -> Tensor:
    """Elementwise add/sub/mul/div with equal shapes or a scalar second arg."""
    if isinstance(b, Tensor):
        if b.shape != a.shape and b.size != 1:
            raise ValueError(f"shape mismatch for '{op_tag}': {a.shape} vs {b.shape}")
    elif np.ndim(b) != 0:
        raise ValueError("second operand must be a Tensor of equal shape or a scalar")
    try:
        return {"add": a.__add__, "sub": a.__sub__, "mul": a.__mul__, "div": a.__truediv__}[op_tag](b)
    except KeyError:
        raise ValueError(f"unknown elementwise op '{op_tag}'") from None


def gather(t: Tensor, indices) -> Tensor:
    """Flat-index gather: result[k] = t.flat[indices[k]]."""
    return t.reshape(t.size).take(indices, axis=0)


def scatter(t: Tensor, indices, values: Tensor) -> Tensor:
    """Write `values` at flat positions `indices` of a copy of `t`.

    When `indices` is a permutation of [0, t.size) this is the exact
    inverse of :func:`gather` with the inverse permutation.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= t.size):
        raise IndexError("scatter index out of range")
    if idx.size != values.size:
        raise ValueError("scatter index/value length mismatch")
    a, v = t, values
    out_data = a.data.reshape(-1).copy()
    out_data[idx] = v.data.reshape(-1)
    written = np.zeros(t.size, dtype=bool)
    written[idx] = True
    shape = t.shape

    def bwd(g):
        gf = g.reshape(-1)
        if a.requires_grad:
            ga = gf.copy()
            ga[written] = 0.0
            a._accum(ga.reshape(a.data.shape))
        if v.requires_grad:
            v._accum(gf[idx].reshape(v.data.shape))

    return Tensor._node(out_data.reshape(shape), (a, v), bwd, "scatter")


def reduce(op_tag: str, t: Tensor, axis=None) -> Tensor:
    """Reduction with op_tag in {sum, mean, max}."""
    for ax in (axis if isinstance(axis, tuple) else () if axis is None else (axis,)):
        if t.shape[ax] == 0:
            raise ValueError("reduction over an empty axis")
    if t.size == 0:
        raise ValueError("reduction over an empty tensor")
    try:
        return {"sum": t.sum, "mean": t.mean, "max": t.amax}[op_tag](axis=axis)
    except KeyError:
        raise ValueError(f"unknown reduction '{op_tag}'") from None


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x @ weight (+ bias), applied over the last axis of x."""
    y = x.matmul(weight)
    if bias is not None:
        y = y + bias
    return y


def flat_index(shape, coords) -> int:
    """Row-major flat index of a coordinate tuple (last axis fastest)."""
    idx = 0
    for extent, c in zip(shape, coords):
        if not 0 <= c < extent:
            raise IndexError(f"coordinate {coords} out of bounds for shape {shape}")
        idx = idx * extent + c
    return idx


def unravel(shape, flat: int):
    """Inverse of :func:`flat_index`."""
    coords = []
    for extent in reversed(shape):
        coords.append(flat % extent)
        flat //= extent
    return tuple(reversed(coords))
