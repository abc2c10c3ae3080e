"""Metrics against brute-force oracles and algebraic identities."""

import math

import numpy as np
import pytest

from pmfsnet.metrics import (
    ConfusionCounts,
    assd,
    confusion_counts,
    dsc_from_counts,
    evaluate_pair,
    extract_surface,
    hausdorff,
    iou_from_counts,
    overlap_metrics,
    surface_overlap,
)


def pairwise_min_dists(src, dst, spacing):
    out = []
    for p in src:
        best = math.inf
        for g in dst:
            d = math.sqrt(
                sum(((a - b) * s) ** 2 for a, b, s in zip(p, g, spacing))
            )
            best = min(best, d)
        out.append(best)
    return out


def rand_surfaces(rng, n=30, nd=2, extent=20):
    sp = rng.integers(0, extent, size=(rng.integers(1, n + 1), nd))
    sg = rng.integers(0, extent, size=(rng.integers(1, n + 1), nd))
    return np.unique(sp, axis=0), np.unique(sg, axis=0)


class TestConfusion:
    def test_identity(self, rng):
        m = rng.integers(0, 2, size=(8, 8))
        c = confusion_counts(m, m, 1)
        assert c.fp == 0 and c.fn == 0

    def test_inversion(self, rng):
        m = rng.integers(0, 2, size=(8, 8))
        c = confusion_counts(1 - m, m, 1)
        assert c.tp == 0 and c.tn == 0

    def test_counting_oracle(self, rng):
        p = rng.integers(0, 3, size=(8, 8))
        g = rng.integers(0, 3, size=(8, 8))
        for cid in range(3):
            c = confusion_counts(p, g, cid)
            tp = fp = fn = tn = 0
            for i in range(8):
                for j in range(8):
                    pi, gi = p[i, j] == cid, g[i, j] == cid
                    tp += pi and gi
                    fp += pi and not gi
                    fn += gi and not pi
                    tn += not pi and not gi
            assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)
            assert c.total == 64

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            confusion_counts(np.zeros((3, 3)), np.zeros((4, 4)), 1)


class TestOverlap:
    def test_direct_substitution(self):
        c = ConfusionCounts(tp=2, tn=0, fp=1, fn=1)
        assert dsc_from_counts(c) == pytest.approx(2 / 3)
        assert iou_from_counts(c) == pytest.approx(1 / 2)

    def test_identity_all_ones(self, rng):
        m = rng.integers(0, 2, size=(10, 10))
        counts = [confusion_counts(m, m, c) for c in (0, 1)]
        assert overlap_metrics(counts) == (1.0, 1.0, 1.0, 1.0)

    def test_dsc_iou_identity_1000_tuples(self, rng):
        for _ in range(1000):
            tp, tn, fp, fn = rng.integers(0, 50, size=4)
            c = ConfusionCounts(int(tp), int(tn), int(fp), int(fn))
            iou = iou_from_counts(c)
            assert abs(dsc_from_counts(c) - 2 * iou / (1 + iou)) < 1e-12

    def test_empty_class_conventions(self):
        absent_both = ConfusionCounts(tp=0, tn=10, fp=0, fn=0)
        assert iou_from_counts(absent_both) == 1.0
        assert dsc_from_counts(absent_both) == 1.0
        absent_one = ConfusionCounts(tp=0, tn=8, fp=0, fn=2)
        assert iou_from_counts(absent_one) == 0.0


class TestSurfaceExtraction:
    def test_solid_square_border_only(self):
        v = np.zeros((5, 5), dtype=int)
        v[1:4, 1:4] = 1
        surf = set(map(tuple, extract_surface(v)))
        expected = {(i, j) for i in range(1, 4) for j in range(1, 4)} - {(2, 2)}
        assert surf == expected

    def test_single_voxel_is_its_own_surface(self):
        v = np.zeros((4, 4), dtype=int)
        v[2, 2] = 1
        assert list(map(tuple, extract_surface(v))) == [(2, 2)]

    def test_boundary_counts_as_background(self):
        # every edge voxel has an out-of-bounds (background) neighbor; the
        # center of the 3x3 solid is the only interior voxel
        v = np.ones((3, 3), dtype=int)
        surf = set(map(tuple, extract_surface(v)))
        assert (1, 1) not in surf and len(surf) == 8

    def test_shift_oracle_random_blobs(self, rng):
        for nd in (2, 3):
            v = (rng.random((8,) * nd) > 0.6).astype(int)
            fg = v == 1
            interior = fg.copy()
            for axis in range(nd):
                for shift in (1, -1):
                    rolled = np.roll(fg, shift, axis=axis)
                    edge = [slice(None)] * nd
                    edge[axis] = 0 if shift == 1 else -1
                    rolled[tuple(edge)] = False
                    interior &= rolled
            ref = set(map(tuple, np.argwhere(fg & ~interior)))
            assert set(map(tuple, extract_surface(v))) == ref

    def test_absent_class_empty(self):
        assert len(extract_surface(np.zeros((4, 4), dtype=int))) == 0


class TestSurfaceDistances:
    def test_identity_zero(self, rng):
        s, _ = rand_surfaces(rng)
        assert hausdorff(s, s) == 0.0
        assert assd(s, s) == 0.0

    def test_two_point_case(self):
        a = np.array([[0, 0]])
        b = np.array([[0, 5]])
        assert hausdorff(a, b) == 5.0
        assert assd(a, b) == 5.0

    def test_brute_force_200_trials(self, rng):
        for _ in range(200):
            sp, sg = rand_surfaces(rng)
            spacing = (1.0, 1.0)
            d_pg = pairwise_min_dists(sp, sg, spacing)
            d_gp = pairwise_min_dists(sg, sp, spacing)
            assert hausdorff(sp, sg) == max(max(d_pg), max(d_gp))
            ref_assd = (math.fsum(d_pg) + math.fsum(d_gp)) / (len(sp) + len(sg))
            assert assd(sp, sg) == pytest.approx(ref_assd, abs=0)

    def test_hd_ge_assd_200_trials(self, rng):
        for _ in range(200):
            sp, sg = rand_surfaces(rng)
            assert hausdorff(sp, sg) >= assd(sp, sg)

    def test_symmetry(self, rng):
        sp, sg = rand_surfaces(rng)
        assert hausdorff(sp, sg) == hausdorff(sg, sp)
        assert assd(sp, sg) == assd(sg, sp)

    def test_spacing_covariance_integer_scalings(self, rng):
        sp, sg = rand_surfaces(rng)
        base_hd = hausdorff(sp, sg, (1.0, 1.0))
        base_assd = assd(sp, sg, (1.0, 1.0))
        for s in (2.0, 3.0, 5.0):
            assert hausdorff(sp, sg, (s, s)) == pytest.approx(s * base_hd, rel=1e-12)
            assert assd(sp, sg, (s, s)) == pytest.approx(s * base_assd, rel=1e-12)

    def test_empty_set_undefined_not_zero(self, rng):
        sp, _ = rand_surfaces(rng)
        empty = np.zeros((0, 2), dtype=int)
        assert math.isnan(hausdorff(sp, empty))
        assert math.isnan(assd(empty, sp))

    def test_transform_path_agrees_with_pairwise(self, rng, monkeypatch):
        import pmfsnet.metrics as M

        sp, sg = rand_surfaces(rng, n=25, extent=12)
        exact_hd = hausdorff(sp, sg)
        exact_assd = assd(sp, sg)
        monkeypatch.setattr(M, "PAIRWISE_LIMIT", 0)
        assert hausdorff(sp, sg) == pytest.approx(exact_hd, rel=1e-12)
        assert assd(sp, sg) == pytest.approx(exact_assd, rel=1e-12)


class TestSurfaceOverlap:
    def test_identity_is_one(self, rng):
        sp, _ = rand_surfaces(rng)
        assert surface_overlap(sp, sp, theta=0.5) == 1.0

    def test_separated_is_zero(self):
        a = np.array([[0, 0], [0, 1]])
        b = np.array([[10, 10]])
        assert surface_overlap(a, b, theta=1.0) == 0.0

    def test_brute_force_threshold(self, rng):
        for _ in range(50):
            sp, sg = rand_surfaces(rng)
            d = pairwise_min_dists(sp, sg, (1.0, 1.0))
            ref = sum(1 for v in d if v < 1.0) / len(sp)
            assert surface_overlap(sp, sg, theta=1.0) == pytest.approx(ref, abs=0)

    def test_bad_theta_rejected(self, rng):
        sp, sg = rand_surfaces(rng)
        with pytest.raises(ValueError):
            surface_overlap(sp, sg, theta=0.0)

    def test_so_invariant_under_joint_scaling(self, rng):
        sp, sg = rand_surfaces(rng)
        base = surface_overlap(sp, sg, (1.0, 1.0), theta=1.5)
        scaled = surface_overlap(sp, sg, (3.0, 3.0), theta=4.5)
        assert base == scaled


class TestEvaluatePair:
    def test_identical_volumes(self, rng):
        v = (rng.random((10, 10)) > 0.5).astype(int)
        rep = evaluate_pair(v, v)
        assert (rep.dsc, rep.iou, rep.miou, rep.acc) == (1, 1, 1, 1)
        assert rep.hd == 0 and rep.assd == 0 and rep.so == 1

    def test_empty_prediction_flags_undefined(self):
        g = np.zeros((8, 8), dtype=int)
        g[2:6, 2:6] = 1
        rep = evaluate_pair(np.zeros((8, 8), dtype=int), g)
        assert rep.iou == 0.0
        assert math.isnan(rep.hd)
        assert not rep.surface_defined
        assert "undefined" in rep.format()

    def test_bad_spacing_rejected(self, rng):
        v = np.zeros((4, 4), dtype=int)
        with pytest.raises(ValueError):
            evaluate_pair(v, v, spacing=(1.0, 0.0))
