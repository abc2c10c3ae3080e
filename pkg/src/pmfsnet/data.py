"""Synthetic datasets, volume preprocessing, and augmentation.

The synthetic generator rasterizes random ellipses (2D) or ellipsoids (3D),
optionally carving a notch out of each blob, and renders images as
foreground/background intensities plus Gaussian noise. Masks are exactly the
rasterized geometry. Everything is driven by one seeded generator, so a
fixed seed reproduces the dataset byte for byte.

Preprocessing follows the CT recipe: clip raw values to [-1412, 17943],
resample to 0.5 mm spacing, min-max normalize to [0, 1], then center-crop or
zero-pad to the target grid.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .serialize import (
    load_image_png,
    load_mask_png,
    load_volume,
    save_image_png,
    save_mask_png,
    save_volume,
)

HU_CLIP = (-1412.0, 17943.0)
TARGET_SPACING = 0.5
TARGET_GRID_3D = (160, 160, 96)


@dataclass
class SyntheticSpec:
    dims: int = 2
    extent: int = 64
    count: int = 10
    notches: bool = True
    noise_sigma: float = 0.05
    contrast: tuple = (0.35, 0.65)
    seed: int = 0

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")
        if self.extent <= 0 or self.count < 0:
            raise ValueError("extent must be positive and count non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        lo, hi = self.contrast
        if not (0 <= lo < hi <= 1):
            raise ValueError("contrast range must satisfy 0 <= lo < hi <= 1")


def _ellipsoid_mask(shape, center, radii, rng, notches):
    grids = np.meshgrid(*[np.arange(e) for e in shape], indexing="ij")
    r2 = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii))
    mask = r2 <= 1.0
    if notches and mask.any():
        # carve a smaller ellipsoid near the rim
        direction = rng.normal(size=len(shape))
        direction /= np.linalg.norm(direction)
        ncenter = [c + d * r * 0.8 for c, d, r in zip(center, direction, radii)]
        nradii = [max(1.5, r * rng.uniform(0.25, 0.45)) for r in radii]
        n2 = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, ncenter, nradii))
        mask &= n2 > 1.0
    return mask


def make_blob(spec: SyntheticSpec, rng):
    """One (image, mask) pair; image float64 in [0,1], mask uint8 {0,1}."""
    shape = (spec.extent,) * spec.dims
    center = [rng.uniform(0.3 * e, 0.7 * e) for e in shape]
    radii = [rng.uniform(0.15 * e, 0.3 * e) for e in shape]
    mask = _ellipsoid_mask(shape, center, radii, rng, spec.notches)
    lo, hi = spec.contrast
    bg = rng.uniform(0.0, lo)
    fg = rng.uniform(hi, 1.0)
    image = np.where(mask, fg, bg) + rng.normal(0.0, spec.noise_sigma, shape)
    return np.clip(image, 0.0, 1.0), mask.astype(np.uint8)


def disk_mask(extent, radius, center=None):
    """Centered disk rasterization, used by the area sanity check."""
    center = (extent / 2.0,) * 2 if center is None else center
    yy, xx = np.meshgrid(np.arange(extent), np.arange(extent), indexing="ij")
    return ((yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius**2).astype(
        np.uint8
    )


def gen_synthetic(spec: SyntheticSpec, out_dir):
    """Write image/mask pairs plus a manifest; returns the manifest path.

    2D pairs are PNG (RGB image, grayscale mask); 3D pairs are PMVL volumes.
    The manifest lists one "image<TAB>mask" relative-path pair per line.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    lines = []
    for i in range(spec.count):
        image, mask = make_blob(spec, rng)
        if spec.dims == 2:
            img_name = f"case_{i:04d}_img.png"
            msk_name = f"case_{i:04d}_msk.png"
            save_image_png(os.path.join(out_dir, img_name),
                           np.stack([image] * 3))
            save_mask_png(os.path.join(out_dir, msk_name), mask)
        else:
            img_name = f"case_{i:04d}_img.pmvl"
            msk_name = f"case_{i:04d}_msk.pmvl"
            save_volume(os.path.join(out_dir, img_name), image)
            save_volume(os.path.join(out_dir, msk_name), mask)
        lines.append(f"{img_name}\t{msk_name}")
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w") as fh:
        fh.write("".join(line + "\n" for line in lines))
    return manifest


def read_manifest(manifest_path):
    """-> list of (image_path, mask_path), absolute."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    pairs = []
    with open(manifest_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            img, msk = line.split("\t")
            pairs.append((os.path.join(base, img), os.path.join(base, msk)))
    return pairs


def load_pair(img_path, msk_path, channels=3):
    """-> (image (C,*S) float64, mask (*S) int)"""
    if img_path.endswith(".pmvl"):
        image, _ = load_volume(img_path)
        mask, _ = load_volume(msk_path)
        return image[None].astype(float), mask.astype(np.int64)
    image = load_image_png(img_path, channels=channels)
    mask = load_mask_png(msk_path)
    return image, mask.astype(np.int64)


def resample_axis(arr, axis, new_len, mode="linear"):
    old_len = arr.shape[axis]
    if new_len == old_len:
        return arr
    if mode == "nearest":
        idx = np.clip(
            np.floor((np.arange(new_len) + 0.5) * old_len / new_len), 0, old_len - 1
        ).astype(int)
        return np.take(arr, idx, axis=axis)
    # linear, edge-clamped, with aligned cell centers
    pos = (np.arange(new_len) + 0.5) * old_len / new_len - 0.5
    lo = np.clip(np.floor(pos).astype(int), 0, old_len - 1)
    hi = np.clip(lo + 1, 0, old_len - 1)
    frac = np.clip(pos - lo, 0.0, 1.0)
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = new_len
    frac = frac.reshape(shape)
    return a * (1 - frac) + b * frac


def resample_volume(vol, spacing, target_spacing=TARGET_SPACING, mode="linear"):
    """-> (resampled volume, new spacing array)"""
    spacing = np.asarray(spacing, float)
    out = vol
    for axis in range(vol.ndim):
        new_len = max(1, int(round(vol.shape[axis] * spacing[axis] / target_spacing)))
        out = resample_axis(out, axis, new_len, mode)
    return out, np.full(vol.ndim, target_spacing)


def crop_or_pad(vol, target):
    """Center-crop or zero-pad every axis to the target extents."""
    out = vol
    for axis, want in enumerate(target):
        have = out.shape[axis]
        if have > want:
            start = (have - want) // 2
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(start, start + want)
            out = out[tuple(sl)]
        elif have < want:
            before = (want - have) // 2
            pad = [(0, 0)] * out.ndim
            pad[axis] = (before, want - have - before)
            out = np.pad(out, pad)
    return out


def preprocess_volume(raw, spacing, target_spacing=TARGET_SPACING,
                      target_grid=None, mode="linear"):
    """Clip raw values, resample, min-max normalize, optionally crop/pad.

    -> (volume in [0,1], spacing)
    """
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("input volume contains non-finite values")
    clipped = np.clip(raw, *HU_CLIP)
    vol, new_spacing = resample_volume(clipped, spacing, target_spacing, mode)
    lo, hi = vol.min(), vol.max()
    if hi - lo == 0:
        warnings.warn("constant volume; normalizing to all zeros")
        vol = np.zeros_like(vol)
    else:
        vol = (vol - lo) / (hi - lo)
    if target_grid is not None:
        vol = crop_or_pad(vol, target_grid)
    return vol, new_spacing


def augment_pair(image, mask, rng, noise_sigma=0.02):
    """Random axis flips shared by image and mask, plus image noise."""
    for axis in range(mask.ndim):
        if rng.random() < 0.5:
            image = np.flip(image, axis=axis + 1)
            mask = np.flip(mask, axis=axis)
    if noise_sigma > 0:
        image = np.clip(
            image + rng.normal(0.0, noise_sigma, image.shape), 0.0, 1.0
        )
    return np.ascontiguousarray(image), np.ascontiguousarray(mask)
