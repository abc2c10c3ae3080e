"""Numba-compiled convolution kernels, 2D and 3D, with groups and dilation.

fastmath stays off so the accumulation order is fixed and runs are
bit-reproducible. Parallelism is over independent output (or input) channels,
so no two threads ever write the same element.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def conv2d_forward(xp, w, s0, s1, d0, d1, groups, y):
    cout, cig, k0, k1 = w.shape
    o0, o1 = y.shape[1], y.shape[2]
    cpg = cout // groups
    for oc in prange(cout):
        ci0 = (oc // cpg) * cig
        for i in range(o0):
            for j in range(o1):
                acc = 0.0
                for c in range(cig):
                    for a in range(k0):
                        ia = i * s0 + a * d0
                        for b in range(k1):
                            acc += xp[ci0 + c, ia, j * s1 + b * d1] * w[oc, c, a, b]
                y[oc, i, j] = acc


@njit(parallel=True, cache=True)
def conv2d_backward_input(dy, w, s0, s1, d0, d1, groups, dxp):
    cout, cig, k0, k1 = w.shape
    o0, o1 = dy.shape[1], dy.shape[2]
    cpg = cout // groups
    cin = dxp.shape[0]
    for c in prange(cin):
        g = c // cig
        cc = c % cig
        for p in range(dxp.shape[1]):
            for q in range(dxp.shape[2]):
                acc = 0.0
                for a in range(k0):
                    t = p - a * d0
                    if t < 0 or t % s0 != 0:
                        continue
                    i = t // s0
                    if i >= o0:
                        continue
                    for b in range(k1):
                        u = q - b * d1
                        if u < 0 or u % s1 != 0:
                            continue
                        j = u // s1
                        if j >= o1:
                            continue
                        for oc in range(g * cpg, (g + 1) * cpg):
                            acc += dy[oc, i, j] * w[oc, cc, a, b]
                dxp[c, p, q] = acc


@njit(parallel=True, cache=True)
def conv2d_backward_weight(dy, xp, s0, s1, d0, d1, groups, dw):
    cout, cig, k0, k1 = dw.shape
    o0, o1 = dy.shape[1], dy.shape[2]
    cpg = cout // groups
    for oc in prange(cout):
        ci0 = (oc // cpg) * cig
        for c in range(cig):
            for a in range(k0):
                for b in range(k1):
                    acc = 0.0
                    for i in range(o0):
                        ia = i * s0 + a * d0
                        for j in range(o1):
                            acc += dy[oc, i, j] * xp[ci0 + c, ia, j * s1 + b * d1]
                    dw[oc, c, a, b] = acc


@njit(parallel=True, cache=True)
def conv3d_forward(xp, w, s0, s1, s2, d0, d1, d2, groups, y):
    cout, cig, k0, k1, k2 = w.shape
    o0, o1, o2 = y.shape[1], y.shape[2], y.shape[3]
    cpg = cout // groups
    for oc in prange(cout):
        ci0 = (oc // cpg) * cig
        for i in range(o0):
            for j in range(o1):
                for m in range(o2):
                    acc = 0.0
                    for c in range(cig):
                        for a in range(k0):
                            ia = i * s0 + a * d0
                            for b in range(k1):
                                jb = j * s1 + b * d1
                                for e in range(k2):
                                    acc += (
                                        xp[ci0 + c, ia, jb, m * s2 + e * d2]
                                        * w[oc, c, a, b, e]
                                    )
                    y[oc, i, j, m] = acc


@njit(parallel=True, cache=True)
def conv3d_backward_input(dy, w, s0, s1, s2, d0, d1, d2, groups, dxp):
    cout, cig, k0, k1, k2 = w.shape
    o0, o1, o2 = dy.shape[1], dy.shape[2], dy.shape[3]
    cpg = cout // groups
    cin = dxp.shape[0]
    for c in prange(cin):
        g = c // cig
        cc = c % cig
        for p in range(dxp.shape[1]):
            for q in range(dxp.shape[2]):
                for r in range(dxp.shape[3]):
                    acc = 0.0
                    for a in range(k0):
                        t = p - a * d0
                        if t < 0 or t % s0 != 0:
                            continue
                        i = t // s0
                        if i >= o0:
                            continue
                        for b in range(k1):
                            u = q - b * d1
                            if u < 0 or u % s1 != 0:
                                continue
                            j = u // s1
                            if j >= o1:
                                continue
                            for e in range(k2):
                                v = r - e * d2
                                if v < 0 or v % s2 != 0:
                                    continue
                                m = v // s2
                                if m >= o2:
                                    continue
                                for oc in range(g * cpg, (g + 1) * cpg):
                                    acc += dy[oc, i, j, m] * w[oc, cc, a, b, e]
                    dxp[c, p, q, r] = acc


@njit(parallel=True, cache=True)
def conv3d_backward_weight(dy, xp, s0, s1, s2, d0, d1, d2, groups, dw):
    cout, cig, k0, k1, k2 = dw.shape
    o0, o1, o2 = dy.shape[1], dy.shape[2], dy.shape[3]
    cpg = cout // groups
    for oc in prange(cout):
        ci0 = (oc // cpg) * cig
        for c in range(cig):
            for a in range(k0):
                for b in range(k1):
                    for e in range(k2):
                        acc = 0.0
                        for i in range(o0):
                            ia = i * s0 + a * d0
                            for j in range(o1):
                                jb = j * s1 + b * d1
                                for m in range(o2):
                                    acc += (
                                        dy[oc, i, j, m]
                                        * xp[ci0 + c, ia, jb, m * s2 + e * d2]
                                    )
                        dw[oc, c, a, b, e] = acc


def _pad(x, pad):
    if not any(pad):
        return np.ascontiguousarray(x)
    return np.pad(x, [(0, 0)] + [(p, p) for p in pad])


def conv_forward(x, w, stride, pad, dilation, groups):
    from ._numpy import out_extent

    kernel = w.shape[2:]
    out_shape = tuple(
        out_extent(n, k, s, p, d)
        for n, k, s, p, d in zip(x.shape[1:], kernel, stride, pad, dilation)
    )
    xp = _pad(x, pad)
    y = np.empty((w.shape[0],) + out_shape, dtype=x.dtype)
    if len(kernel) == 2:
        conv2d_forward(xp, w, *stride, *dilation, groups, y)
    else:
        conv3d_forward(xp, w, *stride, *dilation, groups, y)
    return y


def conv_backward_input(dy, w, x_shape, stride, pad, dilation, groups):
    padded = tuple(n + 2 * p for n, p in zip(x_shape[1:], pad))
    dxp = np.empty((x_shape[0],) + padded, dtype=dy.dtype)
    dy = np.ascontiguousarray(dy)
    if len(w.shape) == 4:
        conv2d_backward_input(dy, w, *stride, *dilation, groups, dxp)
    else:
        conv3d_backward_input(dy, w, *stride, *dilation, groups, dxp)
    if any(pad):
        core = tuple(slice(p, p + n) for p, n in zip(pad, x_shape[1:]))
        return dxp[(slice(None),) + core].copy()
    return dxp


def conv_backward_weight(dy, x, w_shape, stride, pad, dilation, groups):
    xp = _pad(x, pad)
    dy = np.ascontiguousarray(dy)
    dw = np.empty(w_shape, dtype=dy.dtype)
    if len(w_shape) == 4:
        conv2d_backward_weight(dy, xp, *stride, *dilation, groups, dw)
    else:
        conv3d_backward_weight(dy, xp, *stride, *dilation, groups, dw)
    return dw
