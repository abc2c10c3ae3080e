"""Full segmentation network: 3-stage dense-stacking encoder, attention
bottleneck, skip projections, and a choice of decoder.

Scaling versions (channel/unit schedules from the appendix tables, growth
rates chosen so the TINY 3D stage channels come out at 36/64/104):

    BASIC  base [24, 48, 64], units [5, 10, 10], skips [24, 48, 64], c = 64
    SMALL  base [24, 24, 24], units [5, 10, 10], skips [12, 24, 24], c = 48
    TINY   SMALL with units [3, 5, 5]

Presets default to the single-shot direct-fusion decoder except the 2D
BASIC variant, which carries the progressive one. `decoder="none"` plus
`use_attention=False` is the ablation configuration (bare encoder, head at
the bottleneck, nearest upsampling back to full resolution).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .blocks import BranchSet, PMFSBlock, PMFSConfig
from .layers import Conv, ConvSpec, CostRow, Module, conv_block
from .tensor import Tensor

GROWTH = (4, 8, 16)

# Output channels of the direct-fusion conv block and of the three
# progressive decoder stages. Fixed across scaling versions.
FUSION_CHANNELS = 12
DECODER_CHANNELS = (48, 24, 24)

DECODERS = ("direct_fusion", "progressive", "none")


@dataclass
class ScalingConfig:
    name: str
    dims: int
    base_channels: tuple
    dense_units: tuple
    growth: tuple
    skip_channels: tuple
    pmfs_channel: int
    decoder: str
    num_classes: int
    input_shape: tuple  # (channels, *spatial)
    use_attention: bool = True

    def __post_init__(self):
        self.base_channels = tuple(self.base_channels)
        self.dense_units = tuple(self.dense_units)
        self.growth = tuple(self.growth)
        self.skip_channels = tuple(self.skip_channels)
        self.input_shape = tuple(self.input_shape)
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")
        if self.decoder not in DECODERS:
            raise ValueError(f"decoder must be one of {DECODERS}")
        if len(self.input_shape) != self.dims + 1:
            raise ValueError(
                f"input_shape {self.input_shape} does not match dims={self.dims}"
            )
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        for lengths in (self.base_channels, self.dense_units, self.growth,
                        self.skip_channels):
            if len(lengths) != 3:
                raise ValueError("per-stage schedules must have 3 entries")
        axis_names = "HWD"
        for i, extent in enumerate(self.input_shape[1:]):
            if extent % 8 != 0:
                raise ValueError(
                    f"input axis {axis_names[i]}={extent} must be divisible by 8 "
                    "(three stride-2 stages plus kernel-4 pooling)"
                )

    @property
    def stage_channels(self):
        return tuple(
            b + u * g
            for b, u, g in zip(self.base_channels, self.dense_units, self.growth)
        )

    @property
    def in_channels(self):
        return self.input_shape[0]


_PRESET_TABLE = {
    "basic": dict(
        base_channels=(24, 48, 64), dense_units=(5, 10, 10),
        skip_channels=(24, 48, 64), pmfs_channel=64,
    ),
    "small": dict(
        base_channels=(24, 24, 24), dense_units=(5, 10, 10),
        skip_channels=(12, 24, 24), pmfs_channel=48,
    ),
    "tiny": dict(
        base_channels=(24, 24, 24), dense_units=(3, 5, 5),
        skip_channels=(12, 24, 24), pmfs_channel=48,
    ),
}


def _default_decoder(scale, dims):
    # Direct fusion everywhere except the 2D BASIC variant, which keeps the
    # progressive decoder. This is the assignment that keeps every preset
    # inside the published parameter budgets.
    return "progressive" if (scale == "basic" and dims == 2) else "direct_fusion"


def preset(name, dims=None, input_shape=None, num_classes=1):
    """Named config: "tiny-3d", "basic-2d", or a bare scale with dims given."""
    key = name.lower()
    if "-" in key:
        scale, suffix = key.split("-", 1)
        dims = {"2d": 2, "3d": 3}.get(suffix)
        if dims is None:
            raise KeyError(f"unknown preset {name!r}")
    else:
        scale = key
        if dims is None:
            raise ValueError("dims required when the preset name does not carry it")
    if scale not in _PRESET_TABLE:
        raise KeyError(f"unknown preset {name!r}")
    if input_shape is None:
        input_shape = (1, 160, 160, 96) if dims == 3 else (3, 224, 224)
    return ScalingConfig(
        name=scale.upper(),
        dims=dims,
        growth=GROWTH,
        num_classes=num_classes,
        input_shape=tuple(input_shape),
        decoder=_default_decoder(scale, dims),
        **_PRESET_TABLE[scale],
    )


PRESET_NAMES = tuple(
    f"{scale}-{suffix}" for scale in _PRESET_TABLE for suffix in ("2d", "3d")
)


class EncoderStage(Module):
    """Stride-2 entry conv, then dense feature stacking.

    Each unit sees the entry output concatenated with every earlier unit
    output and contributes `growth` new channels; the stage output is the
    whole stack (base + units * growth channels).
    """

    def __init__(self, rng, in_ch, base, units, growth, nd):
        self.entry = conv_block(rng, in_ch, base, nd, stride=2)
        self.units = [
            conv_block(rng, base + i * growth, growth, nd) for i in range(units)
        ]

    def forward(self, x):
        feats = [self.entry(x)]
        for unit in self.units:
            feats.append(unit(T.concat(feats, axis=0) if len(feats) > 1 else feats[0]))
        return T.concat(feats, axis=0) if len(feats) > 1 else feats[0]

    def trace(self, in_shape, prefix=""):
        shape, rows = self.entry.trace(in_shape, f"{prefix}.entry")
        spatial = shape[1:]
        channels = shape[0]
        for i, unit in enumerate(self.units):
            out, r = unit.trace((channels,) + spatial, f"{prefix}.unit{i}")
            rows.extend(r)
            channels += out[0]
        return (channels,) + spatial, rows


class DirectFusionDecoder(Module):
    """Upsample bottleneck and skips to full resolution, concat, one conv
    block, then the class head."""

    def __init__(self, rng, bottleneck_ch, skip_ch, nd, num_classes):
        total = bottleneck_ch + sum(skip_ch)
        self.fuse = conv_block(rng, total, FUSION_CHANNELS, nd, kernel=1)
        self.head = Conv(rng, ConvSpec(FUSION_CHANNELS, num_classes, (1,) * nd))
        self.nd = nd

    def forward(self, bottleneck, skips):
        feats = [T.upsample(bottleneck, 8)]
        for level, skip in enumerate(skips, start=1):
            feats.append(T.upsample(skip, 2**level))
        full = feats[0].shape[1:]
        for f in feats[1:]:
            if f.shape[1:] != full:
                raise ValueError(
                    f"misaligned spatial shapes after upsampling: {f.shape[1:]} "
                    f"vs {full}"
                )
        return self.head(self.fuse(T.concat(feats, axis=0)))

    def trace(self, bottleneck_shape, skip_shapes, prefix="decoder"):
        full = tuple(e * 8 for e in bottleneck_shape[1:])
        total = bottleneck_shape[0] + sum(s[0] for s in skip_shapes)
        shape, rows = self.fuse.trace((total,) + full, f"{prefix}.fuse")
        shape, r = self.head.trace(shape, f"{prefix}.head")
        return shape, rows + r


class ProgressiveDecoder(Module):
    """Three concat-conv-upsample steps mirroring the encoder stages."""

    def __init__(self, rng, bottleneck_ch, skip_ch, nd, num_classes):
        chans = list(DECODER_CHANNELS)
        ins = [
            bottleneck_ch + skip_ch[2],
            chans[0] + skip_ch[1],
            chans[1] + skip_ch[0],
        ]
        self.stages = [
            conv_block(rng, ins[i], chans[i], nd) for i in range(3)
        ]
        self.head = Conv(rng, ConvSpec(chans[2], num_classes, (1,) * nd))
        self.nd = nd

    def forward(self, bottleneck, skips):
        x = bottleneck
        for stage, skip in zip(self.stages, reversed(skips)):
            if x.shape[1:] != skip.shape[1:]:
                raise ValueError(
                    f"misaligned spatial shapes: {x.shape[1:]} vs {skip.shape[1:]}"
                )
            x = T.upsample(stage(T.concat([x, skip], axis=0)), 2)
        return self.head(x)

    def trace(self, bottleneck_shape, skip_shapes, prefix="decoder"):
        rows = []
        shape = bottleneck_shape
        for i, (stage, skip) in enumerate(zip(self.stages, reversed(skip_shapes))):
            merged = (shape[0] + skip[0],) + shape[1:]
            shape, r = stage.trace(merged, f"{prefix}.stage{i}")
            rows.extend(r)
            shape = (shape[0],) + tuple(e * 2 for e in shape[1:])
        shape, r = self.head.trace(shape, f"{prefix}.head")
        return shape, rows + r


class BottleneckHead(Module):
    """decoder="none": class head at bottleneck resolution, upsampled x8."""

    def __init__(self, rng, bottleneck_ch, skip_ch, nd, num_classes):
        self.head = Conv(rng, ConvSpec(bottleneck_ch, num_classes, (1,) * nd))

    def forward(self, bottleneck, skips):
        return T.upsample(self.head(bottleneck), 8)

    def trace(self, bottleneck_shape, skip_shapes, prefix="decoder"):
        shape, rows = self.head.trace(bottleneck_shape, f"{prefix}.head")
        return (shape[0],) + tuple(e * 8 for e in shape[1:]), rows


_DECODER_CLASSES = {
    "direct_fusion": DirectFusionDecoder,
    "progressive": ProgressiveDecoder,
    "none": BottleneckHead,
}


class PMFSNet(Module):
    def __init__(self, cfg: ScalingConfig, seed=0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        nd = cfg.dims
        stage_ch = cfg.stage_channels

        ins = (cfg.in_channels,) + stage_ch[:2]
        self.stages = [
            EncoderStage(
                rng, ins[i], cfg.base_channels[i], cfg.dense_units[i],
                cfg.growth[i], nd,
            )
            for i in range(3)
        ]
        self.bottleneck_channels = stage_ch[2]
        if cfg.use_attention:
            self.pmfs = PMFSBlock(
                rng, stage_ch,
                PMFSConfig(cfg.pmfs_channel, self.bottleneck_channels, nd),
            )
        else:
            self.pmfs = None
        self.skip_projections = [
            conv_block(rng, stage_ch[i], cfg.skip_channels[i], nd, kernel=1)
            for i in range(3)
        ]
        self.decoder = _DECODER_CLASSES[cfg.decoder](
            rng, self.bottleneck_channels, cfg.skip_channels, nd, cfg.num_classes
        )

    def forward(self, x, return_branches=False):
        cfg = self.cfg
        if x.shape != cfg.input_shape and x.shape[0] != cfg.in_channels:
            raise ValueError(
                f"input channels {x.shape[0]} do not match config "
                f"({cfg.in_channels})"
            )
        s1 = self.stages[0](x)
        s2 = self.stages[1](s1)
        s3 = self.stages[2](s2)
        branches = BranchSet(s1, s2, s3)
        bottleneck = self.pmfs(branches) if self.pmfs is not None else s3
        skips = [proj(s) for proj, s in zip(self.skip_projections, (s1, s2, s3))]
        logits = self.decoder(bottleneck, skips)
        if cfg.num_classes == 1:
            probs = T.sigmoid(logits)
        else:
            probs = T.softmax(logits, axis=0)
        if return_branches:
            return probs, branches
        return probs

    def forward_batch(self, batch):
        """Apply the network per item of a leading batch axis."""
        outs = [self.forward(batch[i]) for i in range(batch.shape[0])]
        stacked = T.concat(
            [T.reshape(o, (1,) + o.shape) for o in outs], axis=0
        )
        return stacked

    def trace(self, input_shape=None, prefix=""):
        cfg = self.cfg
        input_shape = tuple(input_shape) if input_shape else cfg.input_shape
        rows = []
        shape = input_shape
        branch_shapes = []
        for i, stage in enumerate(self.stages):
            shape, r = stage.trace(shape, f"stage{i + 1}")
            rows.extend(r)
            branch_shapes.append(shape)
        if self.pmfs is not None:
            bshape, r = self.pmfs.trace(branch_shapes, "pmfs")
            rows.extend(r)
        else:
            bshape = branch_shapes[2]
        skip_shapes = []
        for i, proj in enumerate(self.skip_projections):
            s, r = proj.trace(branch_shapes[i], f"skip{i + 1}")
            rows.extend(r)
            skip_shapes.append(s)
        shape, r = self.decoder.trace(bshape, skip_shapes, "decoder")
        rows.extend(r)
        return shape, rows
