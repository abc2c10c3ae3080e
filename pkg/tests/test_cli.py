"""CLI harness: subcommand behavior, exit codes, CLI-vs-library consistency."""

import os
import shutil

import numpy as np
import pytest

from pmfsnet.cli import main


def run_cli(args):
    return main(args)


class TestSummarize:
    def test_preset_pass_and_target_row(self, capsys):
        assert run_cli(["summarize", "--config", "tiny-3d"]) == 0
        out = capsys.readouterr().out
        assert "0.63 M" in out
        assert "15.14 G" in out
        assert "[pass]" in out

    def test_basic_2d_target(self, capsys):
        assert run_cli(["summarize", "--config", "basic-2d"]) == 0
        out = capsys.readouterr().out
        assert "0.99 M" in out

    def test_custom_config_no_target_row(self, capsys, tmp_path):
        from pmfsnet.config import save_config
        from pmfsnet.model import preset

        from dataclasses import replace

        cfg = replace(preset("tiny-2d", input_shape=(3, 32, 32)), name="custom")
        path = tmp_path / "c.cfg"
        save_config(cfg, path)
        assert run_cli(["summarize", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "no published target row" in out

    def test_unknown_preset_errors(self, capsys):
        assert run_cli(["summarize", "--config", "giant-4d"]) == 1

    def test_totals_match_library(self, capsys):
        from pmfsnet.costs import cost_report
        from pmfsnet.model import PMFSNet, preset

        assert run_cli(["summarize", "--config", "small-2d"]) == 0
        out = capsys.readouterr().out
        rep = cost_report(PMFSNet(preset("small-2d"), seed=0))
        assert str(rep.total_params) in out
        assert str(rep.total_macs) in out


class TestBench:
    def test_default_passes(self, capsys):
        assert run_cli(["bench"]) == 0
        out = capsys.readouterr().out
        assert "2.00" in out and "4.00" in out

    def test_too_few_sizes(self, capsys):
        assert run_cli(["bench", "--sizes", "16x16,16x32"]) == 1

    def test_non_doubling_rejected(self, capsys):
        assert run_cli(["bench", "--sizes", "16x16,32x32,64x64"]) == 1


class TestGradcheck:
    def test_passes(self, capsys):
        assert run_cli(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        for target in ("amff", "pmcs", "pmss", "wedl", "end-to-end-2d"):
            assert target in out
        assert "FAIL" not in out


class TestGen:
    def test_gen_and_manifest(self, tmp_path, capsys):
        out_dir = tmp_path / "ds"
        assert run_cli([
            "gen", "--dims", "2", "--extent", "32", "--count", "3",
            "--out", str(out_dir), "--seed", "5",
        ]) == 0
        from pmfsnet.data import read_manifest

        pairs = read_manifest(str(out_dir / "manifest.txt"))
        assert len(pairs) == 3
        for img, msk in pairs:
            assert os.path.exists(img) and os.path.exists(msk)


class TestTrainEval:
    def test_train_then_eval_identity(self, tmp_path, capsys):
        data = tmp_path / "ds"
        run_cli(["gen", "--dims", "2", "--extent", "32", "--count", "6",
                 "--out", str(data), "--seed", "2"])
        rc = run_cli([
            "train", "--config", "tiny-2d", "--data", str(data / "manifest.txt"),
            "--epochs", "2", "--out", str(tmp_path / "run"), "--seed", "0",
        ])
        assert rc == 0
        assert os.path.exists(tmp_path / "run" / "best.ckpt")
        assert os.path.exists(tmp_path / "run" / "train_log.txt")
        capsys.readouterr()

        # eval with pred dir = gt dir: perfect scores everywhere
        gt = tmp_path / "gt"
        gt.mkdir()
        for i in range(2):
            shutil.copy(data / f"case_{i:04d}_msk.png", gt / f"c{i}.png")
        rc = run_cli(["eval", "--pred", str(gt), "--gt", str(gt)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "dsc=1.0000" in out
        assert "hd=0.0000" in out
        assert "aggregate" in out

    def test_eval_mismatched_cases(self, tmp_path, capsys):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        from pmfsnet.serialize import save_mask_png

        save_mask_png(a / "x.png", np.zeros((4, 4), dtype=int))
        save_mask_png(b / "y.png", np.zeros((4, 4), dtype=int))
        assert run_cli(["eval", "--pred", str(a), "--gt", str(b)]) == 1

    def test_eval_matches_library_calls(self, tmp_path, capsys, rng):
        from pmfsnet.metrics import evaluate_pair
        from pmfsnet.serialize import save_mask_png

        pred_dir = tmp_path / "p"
        gt_dir = tmp_path / "g"
        pred_dir.mkdir()
        gt_dir.mkdir()
        p = (rng.random((12, 12)) > 0.5).astype(int)
        g = (rng.random((12, 12)) > 0.5).astype(int)
        save_mask_png(pred_dir / "c.png", p)
        save_mask_png(gt_dir / "c.png", g)
        assert run_cli(["eval", "--pred", str(pred_dir), "--gt", str(gt_dir)]) == 0
        out = capsys.readouterr().out
        rep = evaluate_pair(p, g)
        assert f"iou={rep.iou:.4f}" in out
        assert f"assd={rep.assd:.4f}" in out


class TestPreprocess:
    def test_volume_roundtrip(self, tmp_path, capsys, rng):
        from pmfsnet.serialize import load_volume, save_volume

        src = tmp_path / "raw.pmvl"
        save_volume(src, rng.random((8, 8, 8)) * 1000, (1.0, 1.0, 1.0))
        dst = tmp_path / "pre.pmvl"
        rc = run_cli(["preprocess", "--input", str(src), "--out", str(dst),
                      "--grid", "8,8,8"])
        assert rc == 0
        vol, spacing = load_volume(str(dst))
        assert vol.shape == (8, 8, 8)
        assert np.all(spacing == 0.5)
        assert vol.min() >= 0.0 and vol.max() <= 1.0


class TestDeterminismAcrossProcesses:
    def test_gen_byte_identical(self, tmp_path):
        import hashlib

        def digest(d):
            h = hashlib.sha256()
            for n in sorted(os.listdir(d)):
                h.update(open(os.path.join(d, n), "rb").read())
            return h.hexdigest()

        for sub in ("a", "b"):
            run_cli(["gen", "--dims", "2", "--extent", "32", "--count", "4",
                     "--out", str(tmp_path / sub), "--seed", "9"])
        assert digest(tmp_path / "a") == digest(tmp_path / "b")
