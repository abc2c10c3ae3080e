"""Tensor algebra: forward semantics against independent oracles."""

import numpy as np
import pytest

from pmfsnet import tensor as T
from pmfsnet.tensor import Tensor


def conv2d_loop(x, w, stride, pad, bias=None):
    """Six-nested-loop scalar convolution oracle, no vectorization."""
    cin, h, wd = x.shape
    cout, cinw, kh, kw = w.shape
    assert cinw == cin
    xp = np.zeros((cin, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((cout, oh, ow))
    for co in range(cout):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ci in range(cin):
                    for a in range(kh):
                        for b in range(kw):
                            acc += xp[ci, i * stride + a, j * stride + b] * w[co, ci, a, b]
                out[co, i, j] = acc + (bias[co] if bias is not None else 0.0)
    return out


class TestConv:
    def test_identity_1x1(self, rng):
        x = Tensor(rng.normal(size=(4, 5, 5)))
        w = Tensor(np.eye(4).reshape(4, 4, 1, 1))
        b = Tensor(np.zeros(4))
        out = T.conv(x, w, (1, 1), (0, 0), bias=b)
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_weights(self, rng):
        x = Tensor(rng.normal(size=(3, 6, 6)))
        w = Tensor(np.zeros((2, 3, 3, 3)))
        out = T.conv(x, w, (1, 1), (1, 1))
        assert np.all(out.data == 0)

    def test_matches_loop_oracle(self, rng):
        x = rng.normal(size=(3, 5, 5))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        out = T.conv(Tensor(x), Tensor(w), (1, 1), (1, 1), bias=Tensor(b))
        ref = conv2d_loop(x, w, 1, 1, b)
        assert np.max(np.abs(out.data - ref) / (np.abs(ref) + 1e-12)) < 1e-6

    def test_strided_matches_loop_oracle(self, rng):
        x = rng.normal(size=(2, 9, 9))
        w = rng.normal(size=(5, 2, 3, 3))
        out = T.conv(Tensor(x), Tensor(w), (2, 2), (1, 1))
        ref = conv2d_loop(x, w, 2, 1)
        np.testing.assert_allclose(out.data, ref, rtol=1e-10, atol=1e-12)

    def test_linearity(self, rng):
        x = rng.normal(size=(3, 6, 6))
        y = rng.normal(size=(3, 6, 6))
        w = Tensor(rng.normal(size=(4, 3, 3, 3)))

        def c(v):
            return T.conv(Tensor(v), w, (1, 1), (1, 1)).data

        lhs = c(2.5 * x - 1.5 * y)
        rhs = 2.5 * c(x) - 1.5 * c(y)
        assert np.max(np.abs(lhs - rhs) / (np.abs(rhs) + 1e-12)) < 1e-6

    def test_channel_mismatch_rejected(self, rng):
        x = Tensor(rng.normal(size=(3, 5, 5)))
        w = Tensor(rng.normal(size=(4, 2, 3, 3)))
        with pytest.raises(ValueError):
            T.conv(x, w, (1, 1), (0, 0))

    def test_empty_output_rejected(self, rng):
        x = Tensor(rng.normal(size=(1, 2, 2)))
        w = Tensor(rng.normal(size=(1, 1, 5, 5)))
        with pytest.raises(ValueError):
            T.conv(x, w, (1, 1), (0, 0))


class TestPool:
    def test_kernel_one_identity(self, rng):
        x = Tensor(rng.normal(size=(3, 4, 4)))
        np.testing.assert_array_equal(T.pool_max(x, (1, 1)).data, x.data)

    def test_two_by_two(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[None])
        out = T.pool_max(x, (2, 2))
        assert out.data.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == 4.0

    def test_kernel4_3d_window_scan(self, rng):
        x = rng.normal(size=(1, 8, 8, 8))
        out = T.pool_max(Tensor(x), (4, 4, 4)).data
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    ref = x[0, 4 * i:4 * i + 4, 4 * j:4 * j + 4, 4 * k:4 * k + 4].max()
                    assert out[0, i, j, k] == ref

    def test_non_divisible_rejected(self, rng):
        with pytest.raises(ValueError):
            T.pool_max(Tensor(rng.normal(size=(1, 5, 5))), (2, 2))


class TestActivateNormalize:
    def test_softmax_constant(self):
        out = T.softmax(Tensor(np.full(7, 3.2)), axis=0)
        np.testing.assert_allclose(out.data, 1 / 7, rtol=1e-12)

    def test_softmax_rows_sum_to_one(self, rng):
        x = Tensor(rng.normal(size=(5, 9)) * 50)
        out = T.softmax(x, axis=1)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)

    def test_sigmoid_zero(self):
        assert T.sigmoid(Tensor(np.zeros(1))).data[0] == 0.5

    def test_sigmoid_range(self, rng):
        out = T.sigmoid(Tensor(rng.normal(size=100) * 10)).data
        assert np.all(out > 0) and np.all(out < 1)

    def test_layernorm_moments(self, rng):
        x = Tensor(rng.normal(size=144) * 3 + 2)
        out = T.layernorm(x, axes=(0,)).data
        assert abs(out.mean()) < 1e-6
        assert abs(out.var() - 1.0) < 1e-5

    def test_groupnorm_moments(self, rng):
        x = Tensor(rng.normal(size=(8, 6, 6)))
        w = Tensor(np.ones(8))
        b = Tensor(np.zeros(8))
        out = T.groupnorm(x, 2, w, b).data
        for g in range(2):
            block = out[4 * g:4 * g + 4]
            assert abs(block.mean()) < 1e-6
            assert abs(block.var() - 1.0) < 1e-4


class TestRearrange:
    def test_permute_inverse(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 4)))
        perm = (2, 0, 1)
        inv = tuple(np.argsort(perm))
        back = T.permute(T.permute(x, perm), inv)
        np.testing.assert_array_equal(back.data, x.data)

    def test_reshape_roundtrip_bit_for_bit(self, rng):
        x = Tensor(rng.normal(size=(3, 4, 5)))
        back = T.reshape(T.reshape(x, (60,)), (3, 4, 5))
        assert np.array_equal(back.data, x.data)

    def test_concat_channels(self, rng):
        parts = [Tensor(rng.normal(size=(48, 4, 4))) for _ in range(3)]
        out = T.concat(parts, axis=0)
        assert out.shape == (144, 4, 4)
        np.testing.assert_array_equal(out.data[48:96], parts[1].data)

    def test_global_mean(self, rng):
        x = rng.normal(size=(4, 6, 6))
        out = T.global_mean(Tensor(x), axes=(1, 2)).data
        for c in range(4):
            ref = sum(x[c, i, j] for i in range(6) for j in range(6)) / 36
            assert abs(out[c, 0, 0] - ref) < 1e-12

    def test_upsample_nearest(self, rng):
        x = rng.normal(size=(2, 3, 3))
        out = T.upsample(Tensor(x), 2).data
        assert out.shape == (2, 6, 6)
        np.testing.assert_array_equal(out[:, ::2, ::2], x)
        np.testing.assert_array_equal(out[:, 1::2, 1::2], x)

    def test_incompatible_reshape_rejected(self, rng):
        with pytest.raises(ValueError):
            T.reshape(Tensor(rng.normal(size=(3, 4))), (5, 5))


class TestMatmul:
    def test_against_numpy(self, rng):
        a = rng.normal(size=(4, 7))
        b = rng.normal(size=(7, 3))
        np.testing.assert_allclose(
            T.matmul(Tensor(a), Tensor(b)).data, a @ b, rtol=1e-12
        )


class TestSerialization:
    def test_pmts_roundtrip(self, rng, tmp_path):
        from pmfsnet.serialize import read_tensor, save_tensor

        arr = rng.normal(size=(3, 4, 5))
        path = tmp_path / "t.pmts"
        save_tensor(path, arr)
        np.testing.assert_array_equal(read_tensor(path), arr)

    def test_pmts_header_layout(self, tmp_path):
        from pmfsnet.serialize import tensor_bytes

        blob = tensor_bytes(np.zeros((2, 3)))
        assert blob[:4] == b"PMTS"
        assert int.from_bytes(blob[4:8], "little") == 2
        assert int.from_bytes(blob[8:12], "little") == 2
        assert int.from_bytes(blob[12:16], "little") == 3
        assert blob[16] == 0  # float64 tag
        assert len(blob) == 17 + 6 * 8

    def test_float32_tag(self):
        from pmfsnet.serialize import tensor_bytes

        blob = tensor_bytes(np.zeros(3, dtype=np.float32))
        assert blob[12] == 1
