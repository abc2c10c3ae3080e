"""Segmentation evaluation metrics.

Overlap metrics (DSC, IoU, mIoU, ACC) come from confusion counts. Surface
metrics (HD, ASSD, SO) operate on extracted surface voxel sets: foreground
voxels with at least one face-neighbor background voxel (4-connectivity in
2D, 6 in 3D); the volume boundary counts as background.

Conventions, stated once:
- a class absent from both volumes scores DSC = IoU = 1; absent from exactly
  one scores 0;
- surface metrics on an empty surface set are *undefined*, never 0; callers
  receive math.nan together with a diagnostic flag;
- the surface-overlap threshold theta defaults to 1.0 mm;
- distances are Euclidean in physical units (voxel index * spacing).

Small sets (<= 10^4 points) use the exact pairwise path; larger sets switch
to a Euclidean distance transform on the voxel grid, which is exact for
grid-aligned points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

DEFAULT_THETA = 1.0
PAIRWISE_LIMIT = 10_000


@dataclass
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


def confusion_counts(pred, gt, class_id):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    p = pred == class_id
    g = gt == class_id
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp, tn, fp, fn)


def dsc_from_counts(c: ConfusionCounts):
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0  # class absent from both volumes
    return 2 * c.tp / denom


def iou_from_counts(c: ConfusionCounts):
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return c.tp / denom


def overlap_metrics(counts):
    """(dsc, iou, miou, acc) from per-class ConfusionCounts.

    dsc/iou are reported for the last class (the foreground in the binary
    case); miou averages over all classes; acc is voxel accuracy.
    """
    counts = list(counts)
    if not counts:
        raise ValueError("need at least one class")
    ious = [iou_from_counts(c) for c in counts]
    dsc = dsc_from_counts(counts[-1])
    iou = ious[-1]
    miou = float(np.mean(ious))
    if len(counts) == 1:
        # binary: TN of the single foreground class covers the background
        acc = (counts[0].tp + counts[0].tn) / counts[0].total
    else:
        # multiclass: per-class TP sums to the number of correct voxels
        acc = sum(c.tp for c in counts) / counts[0].total
    return dsc, iou, miou, acc


def extract_surface(volume, class_id=1):
    """Coordinates (n, ndim) of foreground voxels with a face-neighbor
    background voxel; the boundary of the array counts as background."""
    volume = np.asarray(volume)
    fg = volume == class_id
    if not fg.any():
        return np.zeros((0, volume.ndim), dtype=np.intp)
    interior = ndimage.binary_erosion(
        fg,
        structure=ndimage.generate_binary_structure(volume.ndim, 1),
        border_value=0,
    )
    return np.argwhere(fg & ~interior)


def _directed_dists(src, dst, spacing, shape=None):
    """min distance from each src point to the dst set, in mm."""
    spacing = np.asarray(spacing, dtype=float)
    if len(src) * len(dst) <= PAIRWISE_LIMIT * PAIRWISE_LIMIT and (
        len(src) <= PAIRWISE_LIMIT and len(dst) <= PAIRWISE_LIMIT
    ):
        diff = (src[:, None, :] - dst[None, :, :]) * spacing
        return np.sqrt((diff**2).sum(axis=2)).min(axis=1)
    # grid distance transform of the complement of dst, exact on the grid
    if shape is None:
        hi = np.maximum(src.max(axis=0), dst.max(axis=0)) + 1
        shape = tuple(int(e) for e in hi)
    mask = np.ones(shape, dtype=bool)
    mask[tuple(dst.T)] = False
    edt = ndimage.distance_transform_edt(mask, sampling=spacing)
    return edt[tuple(src.T)]


def _check_sets(sp, sg, names=("prediction", "ground-truth")):
    empties = [n for s, n in zip((sp, sg), names) if len(s) == 0]
    return empties


def hausdorff(sp, sg, spacing=None):
    """Symmetric Hausdorff distance in mm; nan if either set is empty."""
    sp = np.asarray(sp)
    sg = np.asarray(sg)
    if len(sp) == 0 or len(sg) == 0:
        return math.nan
    spacing = np.ones(sp.shape[1]) if spacing is None else spacing
    d_pg = _directed_dists(sp, sg, spacing).max()
    d_gp = _directed_dists(sg, sp, spacing).max()
    return float(max(d_pg, d_gp))


def assd(sp, sg, spacing=None):
    """Average symmetric surface distance in mm; nan if either set is empty."""
    sp = np.asarray(sp)
    sg = np.asarray(sg)
    if len(sp) == 0 or len(sg) == 0:
        return math.nan
    spacing = np.ones(sp.shape[1]) if spacing is None else spacing
    d_pg = _directed_dists(sp, sg, spacing)
    d_gp = _directed_dists(sg, sp, spacing)
    # fsum keeps the reduction exactly rounded, so the result is bitwise
    # reproducible regardless of summation order
    return (math.fsum(d_pg) + math.fsum(d_gp)) / (len(sp) + len(sg))


def surface_overlap(sp, sg, spacing=None, theta=DEFAULT_THETA):
    """Fraction of sp points within theta mm of sg; nan if sp or sg empty."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    sp = np.asarray(sp)
    sg = np.asarray(sg)
    if len(sp) == 0 or len(sg) == 0:
        return math.nan
    spacing = np.ones(sp.shape[1]) if spacing is None else spacing
    d = _directed_dists(sp, sg, spacing)
    return float(np.count_nonzero(d < theta) / len(sp))


@dataclass
class MetricReport:
    dsc: float
    iou: float
    miou: float
    acc: float
    hd: float
    assd: float
    so: float
    theta: float = DEFAULT_THETA

    @property
    def surface_defined(self):
        return not (math.isnan(self.hd) or math.isnan(self.assd)
                    or math.isnan(self.so))

    def format(self):
        def fmt(v, unit=""):
            return "undefined" if math.isnan(v) else f"{v:.4f}{unit}"

        return (
            f"dsc={fmt(self.dsc)} iou={fmt(self.iou)} miou={fmt(self.miou)} "
            f"acc={fmt(self.acc)} hd={fmt(self.hd, 'mm')} "
            f"assd={fmt(self.assd, 'mm')} so={fmt(self.so)} "
            f"(theta={self.theta}mm)"
        )


def evaluate_pair(pred, gt, num_classes=2, spacing=None, theta=DEFAULT_THETA):
    """Full MetricReport for one labeled volume pair.

    num_classes counts background; surface metrics use the highest class id
    as the foreground of interest.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    spacing = np.ones(pred.ndim) if spacing is None else np.asarray(spacing, float)
    if np.any(spacing <= 0):
        raise ValueError("spacing must be strictly positive")
    counts = [confusion_counts(pred, gt, cid) for cid in range(num_classes)]
    dsc, iou, miou, acc = overlap_metrics(counts)
    fg = num_classes - 1
    sp = extract_surface(pred, fg)
    sg = extract_surface(gt, fg)
    return MetricReport(
        dsc=dsc, iou=iou, miou=miou, acc=acc,
        hd=hausdorff(sp, sg, spacing),
        assd=assd(sp, sg, spacing),
        so=surface_overlap(sp, sg, spacing, theta),
        theta=theta,
    )
