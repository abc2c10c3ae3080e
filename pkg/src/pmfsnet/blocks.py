"""Polarized multi-scale feature self-attention block.

Three stages run in sequence over a triple of encoder outputs:

1. branch fusion: max-pool each branch down to the smallest grid (kernels
   4 / 2 / 1), project each to a common channel count c with a 3x3(x3) conv
   block, concatenate to 3c channels;
2. channel attention: a single global key over all positions (softmax-
   normalized output of a 1-channel conv) is multiplied against per-channel
   queries, producing one gate per channel in (0, 1);
3. spatial attention: features regroup into their 3 branches; each branch
   gets a global key (mean over positions, softmax over its c channels) that
   scores every position, and the gated branches restack before a
   depthwise-separable 3x3(x3) bottleneck projection.

Both score products cost O(C * N) multiply-accumulates, so attention cost is
linear in the number of positions. `QuadraticSelfAttention` is the bundled
reference with the full N x N score matrix for the complexity benchmark.

The spatial attention intentionally has no layernorm before its sigmoid:
the channel-attention gate has one, the spatial one does not, and the
asymmetry is kept as designed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import Conv, ConvSpec, CostRow, DepthwiseSeparableConv, Module, conv_block
from .tensor import Tensor

POOL_KERNELS = (4, 2, 1)


@dataclass
class PMFSConfig:
    branch_channel: int  # per-branch unified channel c; fused channels = 3c
    out_channels: int
    dims: int

    def __post_init__(self):
        if self.branch_channel <= 0 or self.out_channels <= 0:
            raise ValueError("channel counts must be positive")
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")

    @property
    def fused_channels(self):
        return 3 * self.branch_channel


@dataclass
class BranchSet:
    x1: Tensor
    x2: Tensor
    x3: Tensor

    def __post_init__(self):
        nd = self.x1.ndim - 1
        if nd not in (2, 3):
            raise ValueError("branches must be 2D or 3D feature maps")
        for x in (self.x2, self.x3):
            if x.ndim - 1 != nd:
                raise ValueError("all branches must share dimensionality")
        s1, s2, s3 = (x.shape[1:] for x in (self.x1, self.x2, self.x3))
        if not all(a == 2 * b == 4 * c for a, b, c in zip(s1, s2, s3)):
            raise ValueError(
                f"branch spatial extents must halve per stage, got {s1}/{s2}/{s3}"
            )
        if any(e % 4 != 0 for e in s1):
            raise ValueError(f"first-branch extents {s1} must be divisible by 4")

    @property
    def branches(self):
        return (self.x1, self.x2, self.x3)

    @property
    def channels(self):
        return tuple(x.shape[0] for x in self.branches)


class BranchFusion(Module):
    """Pool the three branches to a common grid, unify channels, concatenate."""

    def __init__(self, rng, in_channels, cfg: PMFSConfig):
        self.cfg = cfg
        self.projections = [
            conv_block(rng, ch, cfg.branch_channel, cfg.dims)
            for ch in in_channels
        ]

    def forward(self, b: BranchSet):
        nd = self.cfg.dims
        fused = [
            proj(T.pool_max(x, (k,) * nd))
            for proj, x, k in zip(self.projections, b.branches, POOL_KERNELS)
        ]
        return T.concat(fused, axis=0)

    def trace(self, branch_shapes, prefix="amff"):
        rows = []
        out_channels = 0
        for i, (shape, k) in enumerate(zip(branch_shapes, POOL_KERNELS)):
            pooled = (shape[0],) + tuple(e // k for e in shape[1:])
            shape_out, r = self.projections[i].trace(pooled, f"{prefix}.branch{i + 1}")
            rows.extend(r)
            out_channels += shape_out[0]
        return (out_channels,) + shape_out[1:], rows


class ChannelAttention(Module):
    """Gate each of the 3c channels by a single global-key attention score."""

    def __init__(self, rng, cfg: PMFSConfig):
        c = cfg.fused_channels
        nd = cfg.dims
        one = (1,) * nd
        self.w_q = DepthwiseSeparableConv(rng, ConvSpec(c, c, one))
        self.w_k = Conv(rng, ConvSpec(c, 1, one))
        self.w_v = DepthwiseSeparableConv(rng, ConvSpec(c, c, one))
        self.w_z = Conv(rng, ConvSpec(c, c, one))
        self.ln_weight = Tensor(np.ones(c), requires_grad=True)
        self.ln_bias = Tensor(np.zeros(c), requires_grad=True)
        self.cfg = cfg

    def forward(self, a):
        cfg = self.cfg
        c = cfg.fused_channels
        if a.shape[0] != c:
            raise ValueError(f"expected {c} channels, got {a.shape[0]}")
        spatial = a.shape[1:]
        n = int(np.prod(spatial))
        ones = (1,) * cfg.dims

        q = T.reshape(self.w_q(a), (c, n))
        key = T.softmax(T.reshape(self.w_k(a), (n, 1)), axis=0)
        z = T.reshape(T.matmul(q, key), (c,) + ones)
        z = self.w_z(z)
        affine = (c,) + ones
        z = T.layernorm(
            z, axes=(0,),
            weight=T.reshape(self.ln_weight, affine),
            bias=T.reshape(self.ln_bias, affine),
        )
        z_ch = T.sigmoid(z)
        a_ch = self.w_v(a) * z_ch
        return a_ch, z_ch

    def trace(self, in_shape, prefix="pmcs"):
        c = self.cfg.fused_channels
        n = int(np.prod(in_shape[1:]))
        rows = []
        for name, layer in (("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v)):
            _, r = layer.trace(in_shape, f"{prefix}.{name}")
            rows.extend(r)
        rows.append(CostRow(f"{prefix}.score", "attn-score", 0, c * n))
        rows.append(CostRow(f"{prefix}.w_z", "conv", c * c + c, c * c))
        rows.append(CostRow(f"{prefix}.ln", "norm", 2 * c, 0))
        return in_shape, rows


class SpatialAttention(Module):
    """Per-branch global keys score every position; gated branches restack."""

    def __init__(self, rng, cfg: PMFSConfig):
        c = cfg.fused_channels
        one = (1,) * cfg.dims
        self.w_q = Conv(rng, ConvSpec(c, c, one))
        self.w_k = Conv(rng, ConvSpec(c, c, one))
        self.w_v = Conv(rng, ConvSpec(c, c, one))
        self.w_out = conv_block(rng, c, cfg.out_channels, cfg.dims, separable=True)
        self.cfg = cfg

    def forward(self, a_ch):
        cfg = self.cfg
        c = cfg.branch_channel
        if a_ch.shape[0] % 3 != 0 or a_ch.shape[0] != 3 * c:
            raise ValueError(
                f"expected {3 * c} channels (3 branches of {c}), got {a_ch.shape[0]}"
            )
        spatial = a_ch.shape[1:]
        n = int(np.prod(spatial))

        q = T.reshape(self.w_q(a_ch), (3, c, n))
        key = T.global_mean(T.reshape(self.w_k(a_ch), (3, c, n)), axes=(2,))
        key = T.softmax(T.permute(key, (0, 2, 1)), axis=2)  # (3, 1, c)
        scores = T.sigmoid(T.matmul(key, q))  # (3, 1, n), entries in (0, 1)

        v = T.reshape(self.w_v(a_ch), (3, c, n))
        stacked = T.reshape(v * scores, (3 * c,) + spatial)
        a_sp = self.w_out(stacked)

        z_sp = T.reshape(
            T.permute(T.reshape(scores, (3, n)), (1, 0)), (1,) + spatial + (3,)
        )
        return a_sp, z_sp

    def trace(self, in_shape, prefix="pmss"):
        c = self.cfg.branch_channel
        n = int(np.prod(in_shape[1:]))
        rows = []
        for name, layer in (("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v)):
            _, r = layer.trace(in_shape, f"{prefix}.{name}")
            rows.extend(r)
        rows.append(CostRow(f"{prefix}.score", "attn-score", 0, 3 * c * n))
        shape, r = self.w_out.trace(in_shape, f"{prefix}.w_out")
        rows.extend(r)
        return shape, rows


class PMFSBlock(Module):
    """Branch fusion, then channel attention, then spatial attention."""

    def __init__(self, rng, in_channels, cfg: PMFSConfig):
        self.cfg = cfg
        self.fusion = BranchFusion(rng, in_channels, cfg)
        self.channel_attn = ChannelAttention(rng, cfg)
        self.spatial_attn = SpatialAttention(rng, cfg)

    def forward(self, b: BranchSet):
        fused = self.fusion(b)
        a_ch, _ = self.channel_attn(fused)
        a_sp, _ = self.spatial_attn(a_ch)
        return a_sp

    def trace(self, branch_shapes, prefix="pmfs"):
        shape, rows = self.fusion.trace(branch_shapes, f"{prefix}.amff")
        shape, r = self.channel_attn.trace(shape, f"{prefix}.pmcs")
        rows.extend(r)
        shape, r = self.spatial_attn.trace(shape, f"{prefix}.pmss")
        rows.extend(r)
        return shape, rows


class QuadraticSelfAttention(Module):
    """Reference self-attention with a full N x N score matrix.

    Exists only as the quadratic-cost baseline for the complexity benchmark;
    its score product costs N^2 * C multiply-accumulates versus the block's
    C * N.
    """

    def __init__(self, rng, channels, dims):
        one = (1,) * dims
        self.w_q = Conv(rng, ConvSpec(channels, channels, one))
        self.w_k = Conv(rng, ConvSpec(channels, channels, one))
        self.w_v = Conv(rng, ConvSpec(channels, channels, one))
        self.channels = channels
        self.dims = dims

    def forward(self, x):
        c = self.channels
        spatial = x.shape[1:]
        n = int(np.prod(spatial))
        q = T.reshape(self.w_q(x), (c, n))
        k = T.reshape(self.w_k(x), (c, n))
        v = T.reshape(self.w_v(x), (c, n))
        scores = T.softmax(T.matmul(T.permute(q, (1, 0)), k) * (c**-0.5), axis=1)
        out = T.matmul(v, T.permute(scores, (1, 0)))
        return T.reshape(out, x.shape)

    def trace(self, in_shape, prefix="quadratic"):
        c = self.channels
        n = int(np.prod(in_shape[1:]))
        rows = []
        for name, layer in (("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v)):
            _, r = layer.trace(in_shape, f"{prefix}.{name}")
            rows.extend(r)
        rows.append(CostRow(f"{prefix}.score", "attn-score", 0, n * n * c))
        rows.append(CostRow(f"{prefix}.mix", "attn-mix", 0, n * n * c))
        return in_shape, rows
