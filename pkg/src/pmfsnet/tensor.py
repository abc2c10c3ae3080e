"""Minimal reverse-mode tensor algebra over numpy arrays.

Tensors are channels-first, immutable after construction, and record a tape
of parent links plus a backward closure per operation. `backward` walks the
graph once in reverse topological order and accumulates gradients additively
at fan-out points.

Only the operations this package needs exist here: convolution, max pooling,
normalizations, activations, shape rearrangement, and the reductions needed
for losses, plus a central-difference oracle for gradient checking.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels

# When True every operation asserts its output is finite; the test suite
# switches this on.
CHECK_FINITE = False

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64) if not isinstance(
            data, np.ndarray
        ) else data
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _wrap(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, backward_fn):
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by a forward operation")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(data, (a, b), bw)


def neg(a):
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(data, (a, b), bw)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(data, (a, b), bw)


def power(a, exponent):
    a = _wrap(a)
    e = float(exponent)
    data = a.data**e

    def bw(g):
        return (g * e * a.data ** (e - 1.0),)

    return _make(data, (a,), bw)


def exp(a):
    a = _wrap(a)
    data = np.exp(a.data)
    return _make(data, (a,), lambda g: (g * data,))


def log(a):
    a = _wrap(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = _wrap(a)
    data = np.sqrt(a.data)
    return _make(data, (a,), lambda g: (g * 0.5 / data,))


# ---------------------------------------------------------------------------
# activations


def sigmoid(a):
    a = _wrap(a)
    data = np.where(
        a.data >= 0, 1.0 / (1.0 + np.exp(-a.data)),
        np.exp(a.data) / (1.0 + np.exp(a.data)),
    )
    return _make(data, (a,), lambda g: (g * data * (1.0 - data),))


def leaky_relu(a, slope=0.01):
    a = _wrap(a)
    mask = a.data >= 0
    scale = np.where(mask, 1.0, slope)
    return _make(a.data * scale, (a,), lambda g: (g * scale,))


def relu(a):
    return leaky_relu(a, slope=0.0)


def softmax(x, axis):
    x = _wrap(x)
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x - np.max(x.data, axis=axis, keepdims=True)
    e = exp(shifted)
    return e / sum_(e, axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_(a, axis=None, keepdims=False):
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(data, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = _wrap(a)
    if axis is None:
        n = a.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[i] for i in ax]))
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def global_mean(a, axes):
    """Reduce the named axes to extent 1 by arithmetic mean."""
    return mean(a, axis=tuple(axes), keepdims=True)


def reshape(a, shape):
    a = _wrap(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def permute(a, axes):
    a = _wrap(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx):
    a = _wrap(a)
    data = a.data[idx]

    def bw(g):
        out = np.zeros(a.shape, dtype=g.dtype)
        np.add.at(out, idx, g)
        return (out,)

    return _make(np.ascontiguousarray(data), (a,), bw)


def concat(tensors, axis):
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(data, tuple(tensors), bw)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    data = a.data @ b.data

    def bw(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return _make(data, (a, b), bw)


# ---------------------------------------------------------------------------
# convolution / pooling / upsampling


def conv(x, weight, stride, pad, dilation=None, groups=1, bias=None):
    """N-dimensional convolution, x (C_in, *S), weight (C_out, C_in/g, *K)."""
    x, weight = _wrap(x), _wrap(weight)
    nd = x.ndim - 1
    kernel = weight.shape[2:]
    stride = tuple(stride)
    pad = tuple(pad)
    dilation = tuple(dilation) if dilation is not None else (1,) * nd
    if len(kernel) != nd:
        raise ValueError(f"kernel rank {len(kernel)} does not match spatial rank {nd}")
    if x.shape[0] != weight.shape[1] * groups:
        raise ValueError(
            f"input has {x.shape[0]} channels, weights expect "
            f"{weight.shape[1] * groups} (groups={groups})"
        )
    out_shape = tuple(
        kernels.out_extent(n, k, s, p, d)
        for n, k, s, p, d in zip(x.shape[1:], kernel, stride, pad, dilation)
    )
    if any(o <= 0 for o in out_shape):
        raise ValueError(f"convolution produces empty spatial output {out_shape}")

    data = kernels.conv_forward(x.data, weight.data, stride, pad, dilation, groups)

    def bw(g):
        gx = kernels.conv_backward_input(
            g, weight.data, x.shape, stride, pad, dilation, groups
        ) if x.requires_grad else None
        gw = kernels.conv_backward_weight(
            g, x.data, weight.shape, stride, pad, dilation, groups
        ) if weight.requires_grad else None
        return gx, gw

    out = _make(data, (x, weight), bw)
    if bias is not None:
        bias = _wrap(bias)
        out = out + reshape(bias, (bias.shape[0],) + (1,) * nd)
    return out


def pool_max(x, kernel):
    """Non-overlapping max pooling with stride equal to the kernel."""
    x = _wrap(x)
    kernel = tuple(kernel)
    spatial = x.shape[1:]
    if len(kernel) != len(spatial):
        raise ValueError("pooling kernel rank does not match spatial rank")
    for n, k in zip(spatial, kernel):
        if n % k != 0:
            raise ValueError(f"spatial extent {n} not divisible by pool kernel {k}")
    if all(k == 1 for k in kernel):
        return x

    out = tuple(n // k for n, k in zip(spatial, kernel))
    nd = len(spatial)
    split_shape = (x.shape[0],)
    for o, k in zip(out, kernel):
        split_shape += (o, k)
    xr = x.data.reshape(split_shape)
    perm = (0,) + tuple(range(1, 2 * nd + 1, 2)) + tuple(range(2, 2 * nd + 1, 2))
    windows = xr.transpose(perm).reshape((x.shape[0],) + out + (-1,))
    idx = windows.argmax(axis=-1)
    data = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        inv_perm = np.argsort(perm)
        gx = gw.reshape(
            (x.shape[0],) + out + kernel
        ).transpose(inv_perm).reshape(x.shape)
        return (np.ascontiguousarray(gx),)

    return _make(np.ascontiguousarray(data), (x,), bw)


def _resize_matrix(n_in, n_out, mode):
    r = np.zeros((n_out, n_in))
    if mode == "nearest":
        scale = n_in / n_out
        src = np.minimum((np.arange(n_out) * scale).astype(int), n_in - 1)
        r[np.arange(n_out), src] = 1.0
    elif mode == "linear":
        scale = n_in / n_out
        pos = (np.arange(n_out) + 0.5) * scale - 0.5
        pos = np.clip(pos, 0.0, n_in - 1.0)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = pos - lo
        r[np.arange(n_out), lo] += 1.0 - frac
        r[np.arange(n_out), hi] += frac
    else:
        raise ValueError(f"unknown upsample mode {mode!r}")
    return r


def upsample(x, scale, mode="nearest"):
    """Multiply every spatial extent by an integer scale."""
    x = _wrap(x)
    nd = x.ndim - 1
    scales = (scale,) * nd if np.isscalar(scale) else tuple(scale)
    out = x
    for axis, s in enumerate(scales, start=1):
        if s == 1:
            continue
        out = _apply_axis_matrix(
            out, _resize_matrix(out.shape[axis], out.shape[axis] * s, mode), axis
        )
    return out


def _apply_axis_matrix(x, r, axis):
    data = np.moveaxis(np.tensordot(r, x.data, axes=([1], [axis])), 0, axis)

    def bw(g):
        gx = np.moveaxis(np.tensordot(r.T, g, axes=([1], [axis])), 0, axis)
        return (np.ascontiguousarray(gx),)

    return _make(np.ascontiguousarray(data), (x,), bw)


# ---------------------------------------------------------------------------
# normalizations


def layernorm(x, axes, weight=None, bias=None, eps=1e-6):
    """Normalize to zero mean / unit variance over `axes`, optional affine."""
    x = _wrap(x)
    axes = tuple(axes)
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise ValueError(f"layernorm axis {ax} invalid for shape {x.shape}")
    mu = mean(x, axis=axes, keepdims=True)
    centered = x - mu
    var = mean(centered * centered, axis=axes, keepdims=True)
    y = centered / sqrt(var + eps)
    if weight is not None:
        y = y * weight
    if bias is not None:
        y = y + bias
    return y


def groupnorm(x, num_groups, weight, bias, eps=1e-6):
    """Per-group normalization over the channel axis plus all spatial axes."""
    c = x.shape[0]
    if c % num_groups != 0:
        raise ValueError(f"{c} channels not divisible into {num_groups} groups")
    spatial = x.shape[1:]
    grouped = reshape(x, (num_groups, c // num_groups) + spatial)
    normed = layernorm(grouped, axes=tuple(range(1, grouped.ndim)), eps=eps)
    y = reshape(normed, x.shape)
    shape = (c,) + (1,) * len(spatial)
    return y * reshape(weight, shape) + reshape(bias, shape)


# ---------------------------------------------------------------------------
# reverse pass and the finite-difference oracle


def backward(loss, leaves=None):
    """Populate gradients of everything `loss` depends on.

    `leaves`, when given, are additionally guaranteed a (possibly zero)
    gradient even if disconnected from the loss.
    """
    if loss.size != 1:
        raise ValueError("backward requires a scalar loss")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g

    if leaves is not None:
        for leaf in leaves:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)


def finite_diff_check(f, x, epsilon=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `f` maps a Tensor to a scalar Tensor. Error per coordinate is
    |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    probe = Tensor(np.array(x.data, dtype=np.float64), requires_grad=True)
    out = f(probe)
    if out.size != 1:
        raise ValueError("finite_diff_check requires a scalar-valued function")
    backward(out, leaves=[probe])
    analytic = probe.grad

    base = probe.data
    worst = 0.0
    flat = base.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = f(Tensor(base)).item()
            flat[i] = orig - epsilon
            lo = f(Tensor(base)).item()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * epsilon)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst
