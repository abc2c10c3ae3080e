"""Finite-difference verification targets used by both the CLI and tests.

Each target builds a small module at double precision, wraps it in a scalar
objective, and compares reverse-mode gradients against central differences.
The bar for every target is a max relative error below 1e-4.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .blocks import BranchFusion, BranchSet, ChannelAttention, PMFSBlock, PMFSConfig, SpatialAttention
from .losses import wedl
from .model import PMFSNet, preset
from .tensor import Tensor, finite_diff_check

GRAD_TOL = 1e-4


def _branch_input(rng, channels=(6, 8, 10), extent=8, nd=2):
    shapes = [
        (c,) + (extent // (2**i),) * nd for i, c in enumerate(channels)
    ]
    return [rng.normal(size=s) for s in shapes]


def check_amff(seed=0):
    rng = np.random.default_rng(seed)
    cfg = PMFSConfig(branch_channel=4, out_channels=10, dims=2)
    fusion = BranchFusion(rng, (6, 8, 10), cfg)
    x1, x2, x3 = _branch_input(rng)

    def f(x):
        out = fusion(BranchSet(x, Tensor(x2), Tensor(x3)))
        return T.sum_(out * out)

    return finite_diff_check(f, Tensor(x1, requires_grad=True))


def check_pmcs(seed=0):
    rng = np.random.default_rng(seed)
    cfg = PMFSConfig(branch_channel=4, out_channels=10, dims=2)
    attn = ChannelAttention(rng, cfg)
    x = rng.normal(size=(12, 3, 3))

    def f(x):
        a_ch, _ = attn(x)
        return T.sum_(a_ch * a_ch)

    return finite_diff_check(f, Tensor(x, requires_grad=True))


def check_pmss(seed=0):
    rng = np.random.default_rng(seed)
    cfg = PMFSConfig(branch_channel=4, out_channels=10, dims=2)
    attn = SpatialAttention(rng, cfg)
    x = rng.normal(size=(12, 3, 3))

    def f(x):
        a_sp, _ = attn(x)
        return T.sum_(a_sp * a_sp)

    return finite_diff_check(f, Tensor(x, requires_grad=True))


def check_block(seed=0):
    rng = np.random.default_rng(seed)
    cfg = PMFSConfig(branch_channel=4, out_channels=10, dims=2)
    block = PMFSBlock(rng, (6, 8, 10), cfg)
    x1, x2, x3 = _branch_input(rng)

    def f(x):
        out = block(BranchSet(x, Tensor(x2), Tensor(x3)))
        return T.sum_(out * out)

    return finite_diff_check(f, Tensor(x1, requires_grad=True))


def check_wedl(seed=0, all_zero=False):
    rng = np.random.default_rng(seed)
    g = (rng.random((2, 6, 6)) > 0.5).astype(float)
    p0 = np.zeros((2, 6, 6)) if all_zero else rng.random((2, 6, 6))

    def f(p):
        return wedl(p, g)

    return finite_diff_check(f, Tensor(p0, requires_grad=True))


def check_end_to_end(seed=0, extent=16):
    cfg = preset("tiny-2d", input_shape=(3, extent, extent))
    model = PMFSNet(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x0 = rng.normal(size=cfg.input_shape)
    g = (rng.random((1, extent, extent)) > 0.5).astype(float)

    def f(x):
        return wedl(model(x), g)

    return finite_diff_check(f, Tensor(x0, requires_grad=True))


GRADCHECK_TARGETS = (
    ("amff", check_amff),
    ("pmcs", check_pmcs),
    ("pmss", check_pmss),
    ("pmfs-block", check_block),
    ("wedl", check_wedl),
    ("wedl-at-zero", lambda seed=0: check_wedl(seed, all_zero=True)),
    ("end-to-end-2d", check_end_to_end),
)


def run_gradcheck(seed=0, targets=GRADCHECK_TARGETS, tol=GRAD_TOL):
    """-> list of (name, max_rel_err, passed)."""
    results = []
    for name, fn in targets:
        err = fn(seed=seed)
        results.append((name, err, err < tol))
    return results
