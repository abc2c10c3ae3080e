"""Network assembly: presets, shapes, decoder modes, ablation hook."""

from dataclasses import replace

import numpy as np
import pytest

from pmfsnet.model import PMFSNet, PRESET_NAMES, ScalingConfig, preset
from pmfsnet.tensor import Tensor


SMALL_2D = dict(input_shape=(3, 32, 32))


class TestScalingConfig:
    def test_tiny_3d_stage_channels(self):
        cfg = preset("tiny-3d")
        assert cfg.stage_channels == (36, 64, 104)

    def test_small_3d_stage_channels(self):
        cfg = preset("small-3d")
        assert cfg.stage_channels == (44, 104, 184)

    def test_basic_schedule(self):
        cfg = preset("basic-2d")
        assert cfg.base_channels == (24, 48, 64)
        assert cfg.dense_units == (5, 10, 10)
        assert cfg.skip_channels == (24, 48, 64)
        assert cfg.pmfs_channel == 64

    def test_invalid_divisibility_names_axis(self):
        with pytest.raises(ValueError, match="H=30"):
            preset("tiny-2d", input_shape=(3, 30, 64))

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            preset("huge-2d")

    def test_bad_decoder_rejected(self):
        with pytest.raises(ValueError):
            ScalingConfig(
                name="x", dims=2, base_channels=(4, 4, 4),
                dense_units=(1, 1, 1), growth=(4, 8, 16),
                skip_channels=(4, 4, 4), pmfs_channel=6,
                decoder="fancy", num_classes=1, input_shape=(3, 32, 32),
            )


class TestForward:
    def test_output_shape_and_range(self, rng):
        model = PMFSNet(preset("tiny-2d", **SMALL_2D), seed=0)
        out = model(Tensor(rng.normal(size=(3, 32, 32))))
        assert out.shape == (1, 32, 32)
        assert np.all(out.data > 0) and np.all(out.data < 1)

    def test_multiclass_head_softmax(self, rng):
        cfg = preset("tiny-2d", input_shape=(3, 32, 32), num_classes=3)
        model = PMFSNet(cfg, seed=0)
        out = model(Tensor(rng.normal(size=(3, 32, 32))))
        assert out.shape == (3, 32, 32)
        np.testing.assert_allclose(out.data.sum(axis=0), 1.0, atol=1e-9)

    def test_3d_forward(self, rng):
        cfg = preset("tiny-3d", input_shape=(1, 16, 16, 8))
        model = PMFSNet(cfg, seed=0)
        out = model(Tensor(rng.normal(size=(1, 16, 16, 8))))
        assert out.shape == (1, 16, 16, 8)

    def test_branch_channels_match_schedule(self, rng):
        model = PMFSNet(preset("tiny-2d", **SMALL_2D), seed=0)
        _, branches = model(Tensor(rng.normal(size=(3, 32, 32))),
                            return_branches=True)
        assert branches.channels == (36, 64, 104)
        assert branches.x1.shape[1:] == (16, 16)
        assert branches.x3.shape[1:] == (4, 4)

    def test_trace_matches_forward_shape(self, rng):
        for decoder in ("direct_fusion", "progressive", "none"):
            cfg = replace(preset("tiny-2d", **SMALL_2D), decoder=decoder)
            model = PMFSNet(cfg, seed=0)
            out = model(Tensor(rng.normal(size=(3, 32, 32))))
            shape, _ = model.trace()
            assert out.shape == shape == (1, 32, 32), decoder

    def test_decoder_modes_same_output_shape(self, rng):
        x = Tensor(rng.normal(size=(3, 32, 32)))
        shapes = set()
        for decoder in ("direct_fusion", "progressive"):
            cfg = replace(preset("small-2d", **SMALL_2D), decoder=decoder)
            shapes.add(PMFSNet(cfg, seed=0)(x).shape)
        assert shapes == {(1, 32, 32)}

    def test_channel_mismatch_rejected(self, rng):
        model = PMFSNet(preset("tiny-2d", **SMALL_2D), seed=0)
        with pytest.raises(ValueError):
            model(Tensor(rng.normal(size=(1, 32, 32))))

    def test_forward_batch(self, rng):
        model = PMFSNet(preset("tiny-2d", **SMALL_2D), seed=0)
        batch = Tensor(rng.normal(size=(2, 3, 32, 32)))
        out = model.forward_batch(batch)
        assert out.shape == (2, 1, 32, 32)


class TestAblation:
    def test_identity_fusion_builds_and_runs(self, rng):
        cfg = replace(preset("tiny-2d", **SMALL_2D), use_attention=False,
                      decoder="none")
        model = PMFSNet(cfg, seed=0)
        out = model(Tensor(rng.normal(size=(3, 32, 32))))
        assert out.shape == (1, 32, 32)
        assert model.pmfs is None

    def test_ablated_has_fewer_params(self):
        cfg = preset("tiny-2d")
        full = PMFSNet(cfg, seed=0).param_count()
        ablated = PMFSNet(replace(cfg, use_attention=False), seed=0).param_count()
        assert ablated < full


class TestDeterminism:
    def test_same_seed_same_params(self):
        cfg = preset("tiny-2d", **SMALL_2D)
        a = PMFSNet(cfg, seed=3)
        b = PMFSNet(cfg, seed=3)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_different_seed_different_params(self):
        cfg = preset("tiny-2d", **SMALL_2D)
        a = PMFSNet(cfg, seed=0)
        b = PMFSNet(cfg, seed=1)
        diff = any(
            not np.array_equal(pa.data, pb.data)
            for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters())
        )
        assert diff


class TestConfigFiles:
    def test_bundled_presets_roundtrip(self):
        from pmfsnet.config import resolve_config

        for name in PRESET_NAMES:
            direct = preset(name)
            from_file, is_preset = resolve_config(name)
            assert is_preset
            assert from_file == direct

    def test_file_config_builds_same_model(self, tmp_path):
        from pmfsnet.config import resolve_config, save_config

        cfg = preset("tiny-2d", **SMALL_2D)
        path = tmp_path / "my.cfg"
        save_config(cfg, path)
        loaded, is_preset = resolve_config(str(path))
        assert loaded == cfg

    def test_missing_config_rejected(self):
        from pmfsnet.config import resolve_config

        with pytest.raises(FileNotFoundError):
            resolve_config("no-such-preset")
