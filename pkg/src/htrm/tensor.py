"""Dense float64 tensors with reverse-mode differentiation.

Every operation returns a new tensor; tensors are treated as immutable once
created (training code may swap out the ``data`` of leaf parameters between
steps, never mid-graph). Each op validates its result for NaN/Inf so numeric
failures surface at the op that produced them instead of corrupting a run.

The recorded graph is the links between tensors: an op result keeps its
parents and a vector-Jacobian callback. ``backward`` replays that record in
reverse topological order and returns one gradient array per requested
parameter, zeros for parameters the loss never touched.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericError, UsageError

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "power",
    "relu",
    "softmax",
    "tensor_sum",
    "tensor_mean",
    "reshape",
    "transpose",
    "concat",
    "conv_same",
    "backward",
]


class Tensor:
    """A dense array plus optional links into the gradient record."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise NumericError("tensor created with non-finite values")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._vjp = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # sugar; all of these defer to the module-level ops
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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def as_tensor(value) -> Tensor:
    """Wrap arrays/scalars as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data: np.ndarray, parents: tuple, vjp) -> Tensor:
    # a single reduction: any NaN/Inf in the array makes the sum non-finite
    if not np.isfinite(data.sum()):
        raise NumericError("operation produced NaN/Inf")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    else:
        # constant subtrees carry no record, so they cost nothing in backward
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _result(data, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    exponent = float(exponent)
    data = a.data ** exponent

    def vjp(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _result(data, (a,), vjp)


def matmul(a, b) -> Tensor:
    """Matrix product, batched over leading dimensions (numpy @ semantics)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise UsageError(f"matmul expects rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise UsageError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(data, (a, b), vjp)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def _check_axis(axis: int, ndim: int) -> int:
    if not isinstance(axis, (int, np.integer)):
        raise UsageError(f"axis must be an integer, got {axis!r}")
    if not -ndim <= axis < ndim:
        raise UsageError(f"axis {axis} out of range for rank-{ndim} tensor")
    return axis % ndim


def softmax(a, axis: int) -> Tensor:
    """Softmax along one axis; slices along `axis` sum to 1."""
    a = as_tensor(a)
    axis = _check_axis(axis, a.ndim)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _result(y, (a,), vjp)


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is not None:
        axes = (axis,) if isinstance(axis, (int, np.integer)) else tuple(axis)
        axes = tuple(_check_axis(ax, a.ndim) for ax in axes)
    else:
        axes = None
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _result(np.asarray(data, dtype=np.float64), (a,), vjp)


def tensor_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    return mul(tensor_sum(a, axis=axis, keepdims=keepdims), _mean_scale(a, axis))


def _mean_scale(a: Tensor, axis) -> float:
    if axis is None:
        n = a.data.size
    else:
        axes = (axis,) if isinstance(axis, (int, np.integer)) else tuple(axis)
        n = 1
        for ax in axes:
            n *= a.shape[_check_axis(ax, a.ndim)]
    return 1.0 / n


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)
    return _result(data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = a.data.transpose(axes)
    return _result(data, (a,), lambda g: (g.transpose(inverse),))


def getitem(a, key) -> Tensor:
    """Basic (slice/integer) indexing with gradient scatter-back."""
    a = as_tensor(a)
    data = a.data[key]

    def vjp(g):
        full = np.zeros(a.shape)
        full[key] = g
        return (full,)

    return _result(np.asarray(data, dtype=np.float64), (a,), vjp)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise UsageError("concat of zero tensors")
    axis = _check_axis(axis, parts[0].ndim)
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(data, tuple(parts), vjp)


def _conv_plan(x: Tensor, kernel: Tensor, dims):
    if dims is None:
        dims = tuple(range(x.ndim))
    dims = tuple(int(d) for d in dims)
    if len(set(dims)) != len(dims):
        raise UsageError(f"conv_same: repeated dims {dims}")
    dims = tuple(_check_axis(d, x.ndim) for d in dims)
    if kernel.ndim == len(dims):
        per_channel = False
        extents = kernel.shape
    elif kernel.ndim == x.ndim:
        per_channel = True
        extents = tuple(kernel.shape[d] for d in dims)
        for ax in range(x.ndim):
            if ax not in dims and kernel.shape[ax] != x.shape[ax]:
                raise UsageError(
                    f"conv_same: kernel axis {ax} extent {kernel.shape[ax]} "
                    f"does not match input extent {x.shape[ax]}"
                )
    else:
        raise UsageError(
            f"conv_same: kernel rank {kernel.ndim} fits neither the convolved "
            f"dims ({len(dims)}) nor the input rank ({x.ndim})"
        )
    for ext in extents:
        if ext % 2 == 0:
            raise UsageError(f"conv_same requires odd kernel extents, got {extents}")
    return dims, extents, per_channel


_EINSUM_PATHS: dict = {}


def _einsum2(subscripts: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """einsum with a per-shape cached contraction path for large operands."""
    if a.size <= 32768:
        return np.einsum(subscripts, a, b)
    key = (subscripts, a.shape, b.shape)
    path = _EINSUM_PATHS.get(key)
    if path is None:
        path = np.einsum_path(subscripts, a, b, optimize="optimal")[0]
        _EINSUM_PATHS[key] = path
    return np.einsum(subscripts, a, b, optimize=path)


def _conv_labels(ndim: int, dims, per_channel: bool) -> tuple[str, str, str]:
    letters = "abcdefghijklmnopqrstuvwxyz"
    x_lbl = letters[:ndim]
    w_lbl = letters[ndim : ndim + len(dims)]
    if per_channel:
        k_lbl = "".join(
            w_lbl[dims.index(ax)] if ax in dims else x_lbl[ax] for ax in range(ndim)
        )
    else:
        k_lbl = w_lbl
    return x_lbl, w_lbl, k_lbl


def _corr_same(x: np.ndarray, kernel: np.ndarray, dims, extents, per_channel):
    """Same-padded correlation of x with kernel over `dims` (forward only)."""
    pad = [(0, 0)] * x.ndim
    for d, ext in zip(dims, extents):
        half = (ext - 1) // 2
        pad[d] = (half, half)
    xp = np.pad(x, pad)
    windows = sliding_window_view(xp, window_shape=extents, axis=dims)
    # windows: x.shape followed by the window extents, in `dims` order
    x_lbl, w_lbl, k_lbl = _conv_labels(x.ndim, dims, per_channel)
    return _einsum2(f"{x_lbl + w_lbl},{k_lbl}->{x_lbl}", windows, kernel), windows


def conv_same(x, kernel, dims=None) -> Tensor:
    """Same-shape zero-padded correlation over the given dims.

    Two kernel forms are accepted: a kernel of rank len(dims) slides over the
    convolved dims and broadcasts over the rest, while a kernel of the same
    rank as x carries one filter per position along the non-convolved axes
    (its extents there must match the input).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    dims, extents, per_channel = _conv_plan(x, kernel, dims)
    data, windows = _corr_same(x.data, kernel.data, dims, extents, per_channel)
    x_lbl, w_lbl, k_lbl = _conv_labels(x.ndim, dims, per_channel)
    flip_axes = dims if per_channel else tuple(range(kernel.ndim))

    def vjp(g):
        gk = _einsum2(f"{x_lbl + w_lbl},{x_lbl}->{k_lbl}", windows, np.ascontiguousarray(g))
        gx, _ = _corr_same(g, np.flip(kernel.data, axis=flip_axes), dims, extents, per_channel)
        return gx, gk

    return _result(data, (x, kernel), vjp)


def _topo_order(root: Tensor) -> list:
    order = []
    visited = {id(root)}
    stack = [(root, iter(root._parents))]
    while stack:
        node, it = stack[-1]
        advanced = False
        for child in it:
            if id(child) not in visited and child.requires_grad:
                visited.add(id(child))
                stack.append((child, iter(child._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def backward(loss: Tensor, params: Sequence[Tensor]) -> list:
    """Gradient of a scalar loss w.r.t. each parameter.

    Returns one array per parameter, in order; parameters that do not reach
    the loss get a zero gradient of their own shape.
    """
    loss = as_tensor(loss)
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict = {id(loss): np.ones_like(loss.data)}
    leaf_grads: dict = {}
    if loss.requires_grad:
        for node in reversed(_topo_order(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                leaf_grads[id(node)] = g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg

    out = []
    for p in params:
        g = leaf_grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.data)
        else:
            g = np.asarray(g, dtype=np.float64).reshape(p.shape)
            if not np.all(np.isfinite(g)):
                raise NumericError("backward produced non-finite gradient")
        out.append(g)
    return out
