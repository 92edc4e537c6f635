"""End-to-end command-line workflows."""

import numpy as np
import pytest

from hazelab.cli import cli_dispatch
from hazelab.hazesim import HazeParams, synthesize_pair
from hazelab.imgio import load_image, save_depth_raw, save_image
from hazelab.metrics import psnr
from conftest import make_depth, make_scene


@pytest.fixture
def scene_files(tmp_path):
    rng = np.random.default_rng(0)
    clear = make_scene(rng, 48, 48)
    depth = make_depth(rng, 48, 48)
    clear_path = tmp_path / "clear.png"
    depth_path = tmp_path / "depth.dpt"
    save_image(clear, clear_path)
    save_depth_raw(depth, depth_path)
    return tmp_path, clear_path, depth_path


class TestSynthCommand:
    def test_deterministic_outputs(self, scene_files):
        tmp, clear_path, depth_path = scene_files
        args = [
            "synth", "--clear", str(clear_path), "--depth", str(depth_path),
            "--seed", "7", "--out", str(tmp / "h1.png"), "--emit-tmap", str(tmp / "t1.png"),
        ]
        assert cli_dispatch(args) == 0
        args2 = [a.replace("h1", "h2").replace("t1", "t2") for a in args]
        assert cli_dispatch(args2) == 0
        assert (tmp / "h1.png").read_bytes() == (tmp / "h2.png").read_bytes()
        assert (tmp / "t1.png").read_bytes() == (tmp / "t2.png").read_bytes()

    def test_fixed_beta(self, scene_files):
        tmp, clear_path, depth_path = scene_files
        rc = cli_dispatch([
            "synth", "--clear", str(clear_path), "--depth", str(depth_path),
            "--beta", "2.0", "--out", str(tmp / "hb.png"), "--emit-tmap", str(tmp / "tb.png"),
        ])
        assert rc == 0
        t = load_image(tmp / "tb.png")
        assert t.min() >= 0.0 and t.max() <= 1.0


class TestDcpCommand:
    def test_writes_outputs(self, scene_files):
        from hazelab.imgio import load_depth

        tmp, clear_path, depth_path = scene_files
        clear = load_image(clear_path)
        hazy, _, _ = synthesize_pair(clear, load_depth(depth_path), HazeParams(beta_range=(2.0, 2.0), seed=1))
        save_image(hazy, tmp / "hazy.png")
        rc = cli_dispatch([
            "dcp", "--in", str(tmp / "hazy.png"), "--out", str(tmp / "dehazed.png"),
            "--emit-tmap", str(tmp / "tmap.png"), "--set", "dcp.gf_radius=8",
        ])
        assert rc == 0
        dehazed = load_image(tmp / "dehazed.png")
        assert psnr(dehazed, clear) > psnr(hazy, clear)
        tmap = load_image(tmp / "tmap.png")
        assert tmap.ndim == 2

    def test_missing_file_is_runtime_error(self, tmp_path):
        rc = cli_dispatch(["dcp", "--in", str(tmp_path / "nope.png"), "--out", str(tmp_path / "o.png")])
        assert rc == 1


class TestEvalCommand:
    def test_identical_dirs_and_figure(self, tmp_path):
        rng = np.random.default_rng(1)
        pred = tmp_path / "pred"
        gt = tmp_path / "gt"
        pred.mkdir()
        gt.mkdir()
        for i in range(3):
            img = make_scene(rng, 16, 16)
            save_image(img, pred / f"i{i}.png")
            save_image(img, gt / f"i{i}.png")
        out = tmp_path / "report.csv"
        fig = tmp_path / "report.png"
        rc = cli_dispatch(["eval", "--pred", str(pred), "--gt", str(gt), "--out", str(out), "--fig", str(fig)])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "name,psnr_db,ssim"
        mean_line = [l for l in lines if l.startswith("mean,")][0]
        assert mean_line.split(",")[2] == "1.000000"
        assert fig.stat().st_size > 0

    def test_all_skipped_nonzero_exit(self, tmp_path):
        rng = np.random.default_rng(2)
        pred = tmp_path / "pred"
        gt = tmp_path / "gt"
        pred.mkdir()
        gt.mkdir()
        save_image(make_scene(rng, 16, 16), pred / "a.png")
        save_image(make_scene(rng, 16, 16), gt / "b.png")
        rc = cli_dispatch(["eval", "--pred", str(pred), "--gt", str(gt), "--out", str(tmp_path / "r.csv")])
        assert rc == 1
        assert "# skipped" in (tmp_path / "r.csv").read_text()


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert cli_dispatch(["frobnicate"]) == 2
        assert "invalid choice" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        assert cli_dispatch(["dcp", "--out", "x.png"]) == 2

    def test_no_subcommand(self):
        assert cli_dispatch([]) == 2


class TestAugmentCommand:
    def test_writes_ten_triples(self, scene_files):
        rng = np.random.default_rng(5)
        tmp, clear_path, depth_path = scene_files
        tmap_path = tmp / "tmap_in.png"
        save_image(rng.uniform(0.1, 1.0, size=(48, 48)).astype(np.float32), tmap_path)
        out = tmp / "aug"
        rc = cli_dispatch([
            "augment", "--hazy", str(clear_path), "--clear", str(clear_path),
            "--tmap", str(tmap_path),
            "--out", str(out), "--seed", "3", "--input-size", "16",
        ])
        assert rc == 0
        assert len(list(out.glob("aug*_hazy.png"))) == 10
        assert len(list(out.glob("aug*_gt.png"))) == 10
        assert len(list(out.glob("aug*_tmap.png"))) == 10


class TestGradcheckCommand:
    def test_toy_run_passes(self, capsys):
        rc = cli_dispatch(["gradcheck", "--depth", "2", "--base", "4", "--size", "8", "--seed", "0"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "generator" in out and "discriminator" in out
        assert "FAIL" not in out


class TestTrainInferCommands:
    def test_train_then_infer(self, tmp_path):
        rng = np.random.default_rng(3)
        root = tmp_path / "data"
        (root / "hazy").mkdir(parents=True)
        (root / "gt").mkdir()
        for i in range(2):
            clear = make_scene(rng, 24, 24)
            depth = make_depth(rng, 24, 24)
            hazy, _, _ = synthesize_pair(clear, depth, HazeParams(beta_range=(2.0, 2.0), seed=i))
            save_image(hazy, root / "hazy" / f"p{i}.png")
            save_image(clear, root / "gt" / f"p{i}.png")
        out = tmp_path / "run"
        rc = cli_dispatch([
            "train", "--data", str(root), "--out", str(out),
            "--set", "train.epochs=1", "--set", "train.input_size=16",
            "--set", "net.depth=2", "--set", "net.base_width=4",
            "--set", "train.w1=0", "--set", "train.w3=0",
            "--set", "train.checkpoint_interval=1", "--set", "dcp.gf_radius=4",
        ])
        assert rc == 0
        assert (out / "final.ednw").is_file()
        assert (out / "train_log.tsv").is_file()
        assert (out / "curves.png").stat().st_size > 0

        # infer on an image whose extents are not divisible: exercises padding
        probe = tmp_path / "probe.png"
        save_image(make_scene(rng, 30, 26), probe)
        rc = cli_dispatch([
            "infer", "--in", str(probe), "--checkpoint", str(out / "final.ednw"),
            "--out", str(tmp_path / "restored.png"),
            "--emit-tmap", str(tmp_path / "guidance.png"),
            "--set", "dcp.gf_radius=4",
        ])
        assert rc == 0
        restored = load_image(tmp_path / "restored.png")
        assert restored.shape == (30, 26, 3)
