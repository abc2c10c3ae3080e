"""Parameterized layers and the module/cost-accounting plumbing.

A Module owns Tensors (parameters) and sub-modules; `named_parameters`
discovers them by attribute scan in a deterministic order. Every layer also
knows how to describe itself to the cost engine: `trace(in_shape)` returns
the output shape plus per-layer (name, kind, params, macs) rows, mirroring
the exact control flow of `forward`.

Conventions baked in here:
- a "conv block" is conv -> group normalization -> leaky rectifier (0.01);
- group size for normalization is the largest divisor of the channel count
  not exceeding 8 (batch-size-1 training rules out batch statistics);
- weights are fan-in-scaled uniform, biases zero, drawn from one seeded RNG.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class CostRow:
    name: str
    kind: str  # conv | norm | attn-score
    params: int
    macs: int


@dataclass
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple
    stride: tuple = None
    padding: tuple = None
    dilation: tuple = None
    groups: int = 1
    has_bias: bool = True
    depthwise_separable: bool = False

    def __post_init__(self):
        self.kernel = tuple(self.kernel)
        nd = len(self.kernel)
        self.stride = (1,) * nd if self.stride is None else tuple(self.stride)
        self.padding = (0,) * nd if self.padding is None else tuple(self.padding)
        self.dilation = (1,) * nd if self.dilation is None else tuple(self.dilation)
        if self.in_channels <= 0 or self.out_channels <= 0:
            raise ValueError("channel counts must be positive")
        if self.in_channels % self.groups != 0:
            raise ValueError(
                f"groups={self.groups} must divide in_channels={self.in_channels}"
            )

    def out_shape(self, spatial):
        from .kernels import out_extent

        out = tuple(
            out_extent(n, k, s, p, d)
            for n, k, s, p, d in zip(
                spatial, self.kernel, self.stride, self.padding, self.dilation
            )
        )
        if any(o <= 0 for o in out):
            raise ValueError(f"empty spatial output {out} for input {spatial}")
        return out


class Module:
    def _children(self):
        for name, val in vars(self).items():
            if isinstance(val, Module):
                yield name, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, val in vars(self).items():
            if isinstance(val, Tensor):
                yield (prefix + name, val)
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self):
        return sum(p.size for p in self.parameters())

    def forward(self, x):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def trace(self, in_shape, prefix=""):
        """(out_shape, [CostRow]) for a forward pass at `in_shape`."""
        raise NotImplementedError


def norm_groups(channels):
    size = min(8, channels)
    while channels % size != 0:
        size -= 1
    return channels // size


def init_conv_weight(rng, spec: ConvSpec):
    fan_in = int(np.prod(spec.kernel)) * spec.in_channels // spec.groups
    bound = 1.0 / np.sqrt(fan_in)
    shape = (spec.out_channels, spec.in_channels // spec.groups) + spec.kernel
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Conv(Module):
    def __init__(self, rng, spec: ConvSpec):
        if spec.depthwise_separable:
            raise ValueError("use DepthwiseSeparableConv for separable specs")
        self.spec = spec
        self.weight = init_conv_weight(rng, spec)
        self.bias = (
            Tensor(np.zeros(spec.out_channels), requires_grad=True)
            if spec.has_bias
            else None
        )

    def named_parameters(self, prefix=""):
        yield (prefix + "weight", self.weight)
        if self.bias is not None:
            yield (prefix + "bias", self.bias)

    def forward(self, x):
        s = self.spec
        if x.shape[0] != s.in_channels:
            raise ValueError(
                f"expected {s.in_channels} input channels, got {x.shape[0]}"
            )
        return T.conv(
            x, self.weight, s.stride, s.padding, s.dilation, s.groups, bias=self.bias
        )

    def trace(self, in_shape, prefix=""):
        s = self.spec
        if in_shape[0] != s.in_channels:
            raise ValueError(
                f"expected {s.in_channels} input channels, got {in_shape[0]}"
            )
        spatial = s.out_shape(in_shape[1:])
        positions = int(np.prod(spatial))
        params = self.weight.size + (self.bias.size if self.bias is not None else 0)
        macs = (
            positions
            * int(np.prod(s.kernel))
            * (s.in_channels // s.groups)
            * s.out_channels
        )
        row = CostRow(prefix or "conv", "conv", params, macs)
        return (s.out_channels,) + spatial, [row]


class GroupNorm(Module):
    def __init__(self, channels):
        self.channels = channels
        self.num_groups = norm_groups(channels)
        self.weight = Tensor(np.ones(channels), requires_grad=True)
        self.bias = Tensor(np.zeros(channels), requires_grad=True)

    def forward(self, x):
        return T.groupnorm(x, self.num_groups, self.weight, self.bias)

    def trace(self, in_shape, prefix=""):
        return in_shape, [CostRow(prefix or "norm", "norm", 2 * self.channels, 0)]


class ConvBlock(Module):
    """conv -> group norm -> leaky rectifier."""

    def __init__(self, rng, spec: ConvSpec, slope=0.01):
        self.conv = (
            DepthwiseSeparableConv(rng, spec)
            if spec.depthwise_separable
            else Conv(rng, spec)
        )
        self.norm = GroupNorm(spec.out_channels)
        self.slope = slope

    def forward(self, x):
        return T.leaky_relu(self.norm(self.conv(x)), self.slope)

    def trace(self, in_shape, prefix=""):
        shape, rows = self.conv.trace(in_shape, prefix + ".conv" if prefix else "conv")
        shape, nrows = self.norm.trace(shape, prefix + ".norm" if prefix else "norm")
        return shape, rows + nrows


class DepthwiseSeparableConv(Module):
    """Spatial conv with groups=in_channels followed by a 1x1(x1) pointwise."""

    def __init__(self, rng, spec: ConvSpec):
        nd = len(spec.kernel)
        self.depthwise = Conv(
            rng,
            ConvSpec(
                spec.in_channels,
                spec.in_channels,
                spec.kernel,
                stride=spec.stride,
                padding=spec.padding,
                dilation=spec.dilation,
                groups=spec.in_channels,
                has_bias=False,
            ),
        )
        self.pointwise = Conv(
            rng,
            ConvSpec(
                spec.in_channels,
                spec.out_channels,
                (1,) * nd,
                has_bias=spec.has_bias,
            ),
        )
        self.spec = spec

    def forward(self, x):
        return self.pointwise(self.depthwise(x))

    def trace(self, in_shape, prefix=""):
        p = prefix or "dsconv"
        shape, rows = self.depthwise.trace(in_shape, p + ".dw")
        shape, prows = self.pointwise.trace(shape, p + ".pw")
        return shape, rows + prows


def conv_block(rng, in_ch, out_ch, nd, kernel=3, stride=1, separable=False,
               has_bias=True):
    """Same-padding conv block; kernel 3 keeps spatial extent at stride 1."""
    k = (kernel,) * nd
    pad = (kernel // 2,) * nd
    spec = ConvSpec(
        in_ch, out_ch, k, stride=(stride,) * nd, padding=pad,
        has_bias=has_bias, depthwise_separable=separable,
    )
    return ConvBlock(rng, spec)


@dataclass
class Sequential(Module):
    steps: list = field(default_factory=list)

    def forward(self, x):
        for step in self.steps:
            x = step(x)
        return x

    def trace(self, in_shape, prefix=""):
        rows = []
        shape = in_shape
        for i, step in enumerate(self.steps):
            shape, r = step.trace(shape, f"{prefix}.{i}" if prefix else str(i))
            rows.extend(r)
        return shape, rows
