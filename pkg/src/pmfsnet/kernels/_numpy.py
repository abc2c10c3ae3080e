"""Pure-numpy convolution kernels (shift-and-matmul).

Instead of materializing a full im2col buffer, the convolution is computed as
a sum over kernel offsets of a strided slice of the padded input multiplied
by the corresponding weight slab. This keeps peak memory at one
(C_in, n_out) slab and routes all the arithmetic through BLAS.

Layout: x is (C_in, *spatial), w is (C_out, C_in // groups, *kernel).
"""

import numpy as np


def out_extent(n, k, s, p, d):
    return (n + 2 * p - d * (k - 1) - 1) // s + 1


def _pad(x, pad):
    if not any(pad):
        return x
    return np.pad(x, [(0, 0)] + [(p, p) for p in pad])


def _offset_slices(off, out_shape, stride, dilation):
    return tuple(
        slice(o * d, o * d + n * s, s)
        for o, n, s, d in zip(off, out_shape, stride, dilation)
    )


def conv_forward(x, w, stride, pad, dilation, groups):
    cin = x.shape[0]
    cout = w.shape[0]
    kernel = w.shape[2:]
    out_shape = tuple(
        out_extent(n, k, s, p, d)
        for n, k, s, p, d in zip(x.shape[1:], kernel, stride, pad, dilation)
    )
    n_out = int(np.prod(out_shape))
    xp = _pad(x, pad)
    y = np.zeros((groups, cout // groups, n_out), dtype=x.dtype)
    for off in np.ndindex(*kernel):
        sl = _offset_slices(off, out_shape, stride, dilation)
        xs = xp[(slice(None),) + sl].reshape(groups, cin // groups, n_out)
        wk = w[(slice(None), slice(None)) + off].reshape(
            groups, cout // groups, cin // groups
        )
        y += wk @ xs
    return y.reshape((cout,) + out_shape)


def conv_backward_input(dy, w, x_shape, stride, pad, dilation, groups):
    cin = x_shape[0]
    cout = w.shape[0]
    kernel = w.shape[2:]
    out_shape = dy.shape[1:]
    n_out = int(np.prod(out_shape))
    padded = tuple(n + 2 * p for n, p in zip(x_shape[1:], pad))
    dxp = np.zeros((cin,) + padded, dtype=dy.dtype)
    dy2 = dy.reshape(groups, cout // groups, n_out)
    for off in np.ndindex(*kernel):
        sl = _offset_slices(off, out_shape, stride, dilation)
        wk = w[(slice(None), slice(None)) + off].reshape(
            groups, cout // groups, cin // groups
        )
        contrib = (wk.transpose(0, 2, 1) @ dy2).reshape((cin,) + tuple(out_shape))
        dxp[(slice(None),) + sl] += contrib
    if any(pad):
        core = tuple(slice(p, p + n) for p, n in zip(pad, x_shape[1:]))
        return dxp[(slice(None),) + core].copy()
    return dxp


def conv_backward_weight(dy, x, w_shape, stride, pad, dilation, groups):
    cin = x.shape[0]
    cout = w_shape[0]
    kernel = w_shape[2:]
    out_shape = dy.shape[1:]
    n_out = int(np.prod(out_shape))
    xp = _pad(x, pad)
    dy2 = dy.reshape(groups, cout // groups, n_out)
    dw = np.empty(w_shape, dtype=dy.dtype)
    for off in np.ndindex(*kernel):
        sl = _offset_slices(off, out_shape, stride, dilation)
        xs = xp[(slice(None),) + sl].reshape(groups, cin // groups, n_out)
        dw[(slice(None), slice(None)) + off] = (dy2 @ xs.transpose(0, 2, 1)).reshape(
            cout, cin // groups
        )
    return dw
