"""Minimal N-dimensional tensor with reverse-mode differentiation.

The op set is deliberately small and closed: elementwise arithmetic, log /
exp / sqrt / abs, reductions, reshape, matmul / linear, conv2d / depthwise
conv2d, global average pooling, relu / sigmoid, batch norm and channel
concatenation.  Everything else in the package is composed from these, which
keeps the tape auditable and finite-difference checkable.

Training runs in float32; pass float64 data (or use `Tensor(..., dtype=...)`)
to run the same graph in 64-bit for gradient checking.
"""

import contextlib

import numpy as np

from .backend import kernels
from .errors import DimensionError

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the context (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Array value participating in a reverse-mode gradient tape.

    `grad` holds the accumulated gradient after `backward()`; repeated
    backward calls without `zero_grad()` keep accumulating into it.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward_fn = None

    # -- introspection -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{flag})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    # -- gradient plumbing -------------------------------------------------
    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype):
        t = Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)
        return t

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate `grad` on every reachable tensor with requires_grad."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward() needs a scalar loss, got shape {tuple(self.shape)}"
            )
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node._accumulate(g)
            if node._backward_fn is None:
                continue
            parent_grads = node._backward_fn(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not _needs_grad(p):
                    continue
                if id(p) in grads:
                    grads[id(p)] += pg
                else:
                    grads[id(p)] = pg

    # -- operator sugar ------------------------------------------------------
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

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def abs(self):
        return absolute(self)


def _needs_grad(t):
    # A tensor participates in backprop if it or any ancestor requires grad.
    return t.requires_grad or t._backward_fn is not None


def _wrap(value, like=None):
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value)
    if arr.ndim == 0 or arr.dtype not in (np.float32, np.float64):
        dtype = like.dtype if like is not None else DEFAULT_DTYPE
        arr = arr.astype(dtype)
    return Tensor(arr)


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if _grad_enabled and any(_needs_grad(p) for p in parents):
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _check_same_dtype(op, *tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise DimensionError(f"{op}: mixed dtypes {sorted(map(str, dtypes))}")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of NumPy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ------------------------------------------------------------


def add(a, b):
    a = _wrap(a, like=b if isinstance(b, Tensor) else None)
    b = _wrap(b, like=a)
    _check_same_dtype("add", a, b)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(data, (a, b), backward)


def sub(a, b):
    a = _wrap(a, like=b if isinstance(b, Tensor) else None)
    b = _wrap(b, like=a)
    _check_same_dtype("sub", a, b)
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(data, (a, b), backward)


def mul(a, b):
    a = _wrap(a, like=b if isinstance(b, Tensor) else None)
    b = _wrap(b, like=a)
    _check_same_dtype("mul", a, b)
    data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(data, (a, b), backward)


def div(a, b):
    a = _wrap(a, like=b if isinstance(b, Tensor) else None)
    b = _wrap(b, like=a)
    _check_same_dtype("div", a, b)
    data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(data, (a, b), backward)


def log(x):
    x = _wrap(x)
    data = np.log(x.data)

    def backward(g):
        return (g / x.data,)

    return _make(data, (x,), backward)


def exp(x):
    x = _wrap(x)
    data = np.exp(x.data)

    def backward(g):
        return (g * data,)

    return _make(data, (x,), backward)


def sqrt(x):
    x = _wrap(x)
    data = np.sqrt(x.data)

    def backward(g):
        return (g * (0.5 / data),)

    return _make(data, (x,), backward)


def absolute(x):
    """|x|; gradient uses sign(x) (zero at the origin)."""
    x = _wrap(x)
    data = np.abs(x.data)

    def backward(g):
        return (g * np.sign(x.data),)

    return _make(data, (x,), backward)


def relu(x):
    x = _wrap(x)
    data = np.maximum(x.data, 0)

    def backward(g):
        return (g * (x.data > 0),)

    return _make(data, (x,), backward)


def sigmoid(x):
    x = _wrap(x)
    data = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        return (g * data * (1.0 - data),)

    return _make(data, (x,), backward)


# -- shape ops ----------------------------------------------------------------


def reshape(x, shape):
    x = _wrap(x)
    data = x.data.reshape(shape)
    old_shape = x.shape

    def backward(g):
        return (g.reshape(old_shape),)

    return _make(data, (x,), backward)


def sum_(x, axis=None, keepdims=False):
    x = _wrap(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.shape).copy(),)

    return _make(data, (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = _wrap(x)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= x.shape[ax]
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def concat_channels(tensors):
    """Concatenate [N, C_i, H, W] tensors along the channel axis."""
    tensors = [_wrap(t) for t in tensors]
    _check_same_dtype("concat_channels", *tensors)
    base = tensors[0]
    for i, t in enumerate(tensors[1:], start=1):
        if t.data.ndim != 4 or base.data.ndim != 4:
            raise DimensionError("concat_channels: inputs must be 4-d [N,C,H,W]")
        if t.shape[0] != base.shape[0] or t.shape[2:] != base.shape[2:]:
            raise DimensionError(
                f"concat_channels: operand {i} has shape {tuple(t.shape)}, "
                f"incompatible with {tuple(base.shape)} outside axis 1"
            )
    data = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=1))

    return _make(data, tuple(tensors), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    a = _wrap(a)
    b = _wrap(b)
    _check_same_dtype("matmul", a, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul: operands must be 2-d")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner axes disagree, {a.shape[1]} (a axis 1) vs {b.shape[0]} (b axis 0)"
        )
    data = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _make(data, (a, b), backward)


def linear(x, w, b=None):
    """Affine map: x [N, F_in] @ w.T [F_in, F_out] (+ b)."""
    x = _wrap(x)
    w = _wrap(w)
    _check_same_dtype("linear", x, w)
    if x.data.ndim != 2:
        raise DimensionError(f"linear: input must be 2-d, got {tuple(x.shape)}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"linear: input features (axis 1) = {x.shape[1]} but weight expects {w.shape[1]}"
        )
    y = matmul(x, transpose2d(w))
    if b is not None:
        y = add(y, reshape(_wrap(b, like=x), (1, -1)))
    return y


def transpose2d(x):
    x = _wrap(x)
    data = x.data.T.copy()

    def backward(g):
        return (g.T.copy(),)

    return _make(data, (x,), backward)


# -- convolutions -------------------------------------------------------------


def _conv_checks(op, x, w, stride, padding, depthwise=False):
    if x.data.ndim != 4:
        raise DimensionError(f"{op}: input must be [N,C,H,W], got {tuple(x.shape)}")
    if w.data.ndim != 4:
        raise DimensionError(f"{op}: weight must be 4-d, got {tuple(w.shape)}")
    if w.shape[2] != w.shape[3]:
        raise DimensionError(f"{op}: only square kernels supported, got {tuple(w.shape)}")
    if depthwise:
        if w.shape[1] != 1:
            raise DimensionError(
                f"{op}: weight axis 1 must be 1 (one filter per channel), got {w.shape[1]}"
            )
        if w.shape[0] != x.shape[1]:
            raise DimensionError(
                f"{op}: weight channel count (axis 0) = {w.shape[0]} "
                f"but input has {x.shape[1]} channels (axis 1)"
            )
    elif x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"{op}: input channels (axis 1) = {x.shape[1]} but weight expects {w.shape[1]} (axis 1)"
        )
    k = w.shape[2]
    if x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k:
        raise DimensionError(
            f"{op}: spatial dims {x.shape[2]}x{x.shape[3]} too small for kernel {k} "
            f"with padding {padding}"
        )
    if stride < 1 or padding < 0:
        raise DimensionError(f"{op}: invalid stride/padding ({stride}, {padding})")


def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlation of [N,Cin,H,W] with [Cout,Cin,k,k] filters."""
    x = _wrap(x)
    w = _wrap(w)
    _check_same_dtype("conv2d", x, w)
    _conv_checks("conv2d", x, w, stride, padding)
    data = kernels.conv2d_forward(
        np.ascontiguousarray(x.data), np.ascontiguousarray(w.data), stride, padding
    )

    def backward(g):
        gx, gw = kernels.conv2d_backward(
            np.ascontiguousarray(x.data),
            np.ascontiguousarray(w.data),
            np.ascontiguousarray(g),
            stride,
            padding,
        )
        return gx, gw

    out = _make(data, (x, w), backward)
    if b is not None:
        b = _wrap(b, like=x)
        if b.shape != (w.shape[0],):
            raise DimensionError(
                f"conv2d: bias shape {tuple(b.shape)} must be ({w.shape[0]},)"
            )
        out = add(out, reshape(b, (1, -1, 1, 1)))
    return out


def depthwise_conv2d(x, w, stride=1, padding=0):
    """Per-channel convolution: weight [C,1,k,k], groups == C."""
    x = _wrap(x)
    w = _wrap(w)
    _check_same_dtype("depthwise_conv2d", x, w)
    _conv_checks("depthwise_conv2d", x, w, stride, padding, depthwise=True)
    data = kernels.depthwise_forward(
        np.ascontiguousarray(x.data), np.ascontiguousarray(w.data), stride, padding
    )

    def backward(g):
        gx, gw = kernels.depthwise_backward(
            np.ascontiguousarray(x.data),
            np.ascontiguousarray(w.data),
            np.ascontiguousarray(g),
            stride,
            padding,
        )
        return gx, gw

    return _make(data, (x, w), backward)


def global_avg_pool(x):
    """[N,C,H,W] -> [N,C] spatial mean."""
    x = _wrap(x)
    if x.data.ndim != 4:
        raise DimensionError(f"global_avg_pool: input must be 4-d, got {tuple(x.shape)}")
    hw = x.shape[2] * x.shape[3]
    data = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / hw, x.shape).copy(),)

    return _make(data, (x,), backward)


# -- batch norm ---------------------------------------------------------------


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.9, eps=1e-5):
    """Per-channel batch normalization over (N, H, W).

    `running_mean` / `running_var` are plain arrays updated in place in
    training mode with `running = momentum * running + (1 - momentum) * batch`.
    Eval mode normalizes with the running statistics.
    """
    x = _wrap(x)
    gamma = _wrap(gamma, like=x)
    beta = _wrap(beta, like=x)
    _check_same_dtype("batch_norm", x, gamma, beta)
    if x.data.ndim != 4:
        raise DimensionError(f"batch_norm: input must be 4-d, got {tuple(x.shape)}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"batch_norm: gamma/beta must have shape ({c},), got "
            f"{tuple(gamma.shape)} and {tuple(beta.shape)}"
        )
    gshape = (1, c, 1, 1)
    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu.reshape(gshape)) * inv.reshape(gshape)
        data = gamma.data.reshape(gshape) * xhat + beta.data.reshape(gshape)
        m = x.shape[0] * x.shape[2] * x.shape[3]

        def backward(g):
            dxhat = g * gamma.data.reshape(gshape)
            sum_dxhat = dxhat.sum(axis=(0, 2, 3))
            sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))
            gx = (
                dxhat
                - (sum_dxhat / m).reshape(gshape)
                - xhat * (sum_dxhat_xhat / m).reshape(gshape)
            ) * inv.reshape(gshape)
            ggamma = (g * xhat).sum(axis=(0, 2, 3))
            gbeta = g.sum(axis=(0, 2, 3))
            return gx, ggamma, gbeta

        return _make(data, (x, gamma, beta), backward)

    inv = 1.0 / np.sqrt(running_var + eps)
    xhat = (x.data - running_mean.reshape(gshape)) * inv.reshape(gshape).astype(x.dtype)
    data = gamma.data.reshape(gshape) * xhat + beta.data.reshape(gshape)

    def backward(g):
        gx = g * (gamma.data * inv).reshape(gshape).astype(x.dtype)
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        return gx, ggamma, gbeta

    return _make(data, (x, gamma, beta), backward)
