"""Schedule, augmentation, alternating updates, and resumability."""

import math

import numpy as np
import pytest

from hazelab.dcp import DcpParams
from hazelab.hazesim import HazeParams, synthesize_pair
from hazelab.imgio import save_image
from hazelab.losses import LossWeights, build_feature_extractor
from hazelab.models import NetSpec, build_discriminator, build_generator
from hazelab.trainer import (
    SamplePair,
    TrainConfig,
    augment,
    epoch_rng,
    format_log_row,
    list_pairs,
    load_checkpoint,
    lr_at,
    sample_crop_boxes,
    save_checkpoint,
    train_loop,
    train_step,
)
from conftest import make_depth, make_scene

TOY_NET = NetSpec(depth=2, base_width=4)


def toy_cfg(**kw):
    defaults = dict(
        epochs=2,
        lr0=1e-4,
        input_size=16,
        batch_size=1,
        critic_steps=1,
        seed=0,
        weights=LossWeights(0.0, 1.0, 0.0, 1.0),
        checkpoint_interval=1,
        net=TOY_NET,
        dcp_params=DcpParams(gf_radius=4),
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


def toy_pair(seed=0, size=24):
    rng = np.random.default_rng(seed)
    clear = make_scene(rng, size, size)
    depth = make_depth(rng, size, size)
    hazy, t, _ = synthesize_pair(clear, depth, HazeParams(beta_range=(2.0, 2.0), seed=seed))
    return SamplePair(hazy, clear, t.astype(np.float32))


def write_dataset(root, n=3, size=24):
    (root / "hazy").mkdir(parents=True)
    (root / "gt").mkdir()
    for i in range(n):
        pair = toy_pair(seed=100 + i, size=size)
        save_image(pair.hazy, root / "hazy" / f"im{i}.png")
        save_image(pair.clear, root / "gt" / f"im{i}.png")


class TestLrSchedule:
    def test_initial_rate(self):
        cfg = toy_cfg(epochs=400, decay_start_epoch=200)
        assert lr_at(0, cfg) == 1e-4

    def test_boundary_before_decay(self):
        cfg = toy_cfg(epochs=400, decay_start_epoch=200)
        assert lr_at(199, cfg) == 1e-4
        assert lr_at(200, cfg) == 1e-4

    def test_linear_midpoint(self):
        cfg = toy_cfg(epochs=400, decay_start_epoch=200)
        assert lr_at(300, cfg) == pytest.approx(0.5e-4, rel=1e-12)

    def test_final_epoch_positive(self):
        cfg = toy_cfg(epochs=400, decay_start_epoch=200)
        assert lr_at(399, cfg) == pytest.approx(1e-4 / 200, rel=1e-12)
        assert lr_at(399, cfg) > 0

    def test_non_increasing(self):
        cfg = toy_cfg(epochs=50, decay_start_epoch=10)
        rates = [lr_at(e, cfg) for e in range(50)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        assert rates[:10] == [cfg.lr0] * 10

    def test_out_of_range(self):
        cfg = toy_cfg(epochs=10)
        with pytest.raises(ValueError, match="out of range"):
            lr_at(10, cfg)
        with pytest.raises(ValueError, match="out of range"):
            lr_at(-1, cfg)

    def test_default_decay_start_is_half(self):
        cfg = toy_cfg(epochs=100, decay_start_epoch=None)
        assert cfg.decay_start == 50


class TestAugment:
    def test_emits_exactly_ten(self):
        pairs = augment(toy_pair(), np.random.default_rng(0), input_size=16)
        assert len(pairs) == 10
        for p in pairs:
            assert p.hazy.shape == (16, 16, 3)
            assert p.clear.shape == (16, 16, 3)
            assert p.guidance.shape == (16, 16)

    def test_crop_boxes_preserve_aspect(self):
        rng = np.random.default_rng(1)
        for h, w in ((31, 47), (64, 64), (100, 37)):
            for top, left, ch, cw in sample_crop_boxes(h, w, rng, count=20):
                assert 0 <= top and top + ch <= h
                assert 0 <= left and left + cw <= w
                # cw should match the original ratio within 1 pixel
                assert abs(cw - ch * w / h) <= 1.0

    def test_mirror_involution(self):
        pairs = augment(toy_pair(), np.random.default_rng(2), input_size=16)
        for plain, mirrored in zip(pairs[0::2], pairs[1::2]):
            np.testing.assert_array_equal(mirrored.hazy[:, ::-1], plain.hazy)
            np.testing.assert_array_equal(mirrored.clear[:, ::-1], plain.clear)
            np.testing.assert_array_equal(mirrored.guidance[:, ::-1], plain.guidance)

    def test_identical_geometry_via_coordinate_raster(self):
        # encode pixel coordinates; the guidance raster must replicate the
        # image channel bit for bit after any crop/resize/flip
        h, w = 24, 30
        coords = np.linspace(0.0, 1.0, h * w, dtype=np.float32).reshape(h, w)
        img = np.stack([coords, coords * 0.5, np.zeros_like(coords)], axis=2)
        pair = SamplePair(img, img.copy(), coords.copy())
        for p in augment(pair, np.random.default_rng(3), input_size=16):
            np.testing.assert_array_equal(p.hazy[..., 0], p.guidance)
            np.testing.assert_array_equal(p.clear[..., 0], p.guidance)

    def test_without_guidance(self):
        pair = toy_pair()
        pair = SamplePair(pair.hazy, pair.clear, None)
        pairs = augment(pair, np.random.default_rng(4), input_size=16)
        assert len(pairs) == 10
        assert all(p.guidance is None for p in pairs)

    def test_degenerate_image_skipped(self):
        tiny = SamplePair(
            np.zeros((1, 5, 3), np.float32), np.zeros((1, 5, 3), np.float32), np.zeros((1, 5), np.float32)
        )
        with pytest.warns(UserWarning, match="degenerate"):
            assert augment(tiny, np.random.default_rng(5), input_size=16) == []


class TestTrainStep:
    def _stepped(self, cfg, steps=1, seed=0):
        gen = build_generator(cfg.net, seed=seed)
        dis = build_discriminator(cfg.net, seed=seed + 1)
        pair = augment(toy_pair(), np.random.default_rng(0), cfg.input_size)[0]
        reports = [train_step(gen, dis, [pair], cfg, cfg.lr0, None) for _ in range(steps)]
        return gen, dis, pair, reports

    def test_report_fields_finite(self):
        _, _, _, reports = self._stepped(toy_cfg())
        report = reports[0]
        assert set(report) == {"l_adv", "l_mse", "l_per", "l_I", "l_D", "lr"}
        assert all(math.isfinite(v) for v in report.values())

    def test_critic_frozen_during_generator_update(self):
        cfg = toy_cfg(critic_steps=0, weights=LossWeights())
        gen = build_generator(cfg.net, seed=3)
        dis = build_discriminator(cfg.net, seed=4)
        pair = augment(toy_pair(), np.random.default_rng(1), cfg.input_size)[0]
        before = {n: t.data.tobytes() for n, t in dis.params.tensors()}
        fe = build_feature_extractor(seed=5)
        train_step(gen, dis, [pair], cfg, cfg.lr0, fe)
        after = {n: t.data.tobytes() for n, t in dis.params.tensors()}
        assert before == after

    def test_feature_extractor_unchanged(self):
        cfg = toy_cfg(weights=LossWeights())
        gen = build_generator(cfg.net, seed=3)
        dis = build_discriminator(cfg.net, seed=4)
        fe = build_feature_extractor(seed=6)
        before = {n: t.data.tobytes() for n, t in fe.params.tensors()}
        pair = augment(toy_pair(), np.random.default_rng(1), cfg.input_size)[0]
        for _ in range(3):
            train_step(gen, dis, [pair], cfg, cfg.lr0, fe)
        after = {n: t.data.tobytes() for n, t in fe.params.tensors()}
        assert before == after

    def test_integral_identity(self):
        cfg = toy_cfg(weights=LossWeights())
        gen = build_generator(cfg.net, seed=7)
        dis = build_discriminator(cfg.net, seed=8)
        fe = build_feature_extractor(seed=9)
        pair = augment(toy_pair(), np.random.default_rng(2), cfg.input_size)[0]
        r = train_step(gen, dis, [pair], cfg, cfg.lr0, fe)
        combined = 100 * r["l_adv"] + 100 * r["l_mse"] + 100 * r["l_per"]
        assert r["l_I"] == pytest.approx(combined, abs=1e-5)

    def test_mse_only_decreases_over_windows(self):
        cfg = toy_cfg(critic_steps=0, lr0=1e-3)
        _, _, _, reports = self._stepped(cfg, steps=200)
        mse = [r["l_mse"] for r in reports]
        for lo in range(0, 150, 50):
            assert mse[lo + 50] < mse[lo]

    def test_all_params_finite_after_steps(self):
        cfg = toy_cfg()
        gen, dis, _, _ = self._stepped(cfg, steps=5)
        for _, t in gen.params.tensors():
            assert np.all(np.isfinite(t.data))
        for _, t in dis.params.tensors():
            assert np.all(np.isfinite(t.data))

    def test_empty_batch_rejected(self):
        cfg = toy_cfg()
        gen = build_generator(cfg.net, seed=0)
        dis = build_discriminator(cfg.net, seed=1)
        with pytest.raises(ValueError, match="nonempty"):
            train_step(gen, dis, [], cfg, cfg.lr0, None)

    def test_weight_clip_applies_to_critic(self):
        cfg = toy_cfg(weight_clip=0.001, weights=LossWeights(1.0, 1.0, 0.0, 1.0))
        gen, dis, _, _ = self._stepped(cfg, steps=2)
        for _, t in dis.params.tensors():
            assert np.all(np.abs(t.data) <= 0.001 + 1e-9)


class TestCheckpointing:
    def test_save_load_save_byte_identical(self, tmp_path):
        cfg = toy_cfg()
        gen = build_generator(cfg.net, seed=0)
        dis = build_discriminator(cfg.net, seed=1)
        pair = augment(toy_pair(), np.random.default_rng(0), cfg.input_size)[0]
        for _ in range(3):
            train_step(gen, dis, [pair], cfg, cfg.lr0, None)
        p1 = tmp_path / "a.ednw"
        p2 = tmp_path / "b.ednw"
        save_checkpoint(p1, gen, dis, cfg, epoch=1)
        bundle = load_checkpoint(p1)
        save_checkpoint(p2, bundle.generator, bundle.discriminator, cfg, epoch=1)
        assert p1.read_bytes() == p2.read_bytes()

    def test_load_restores_moments_and_steps(self, tmp_path):
        cfg = toy_cfg()
        gen = build_generator(cfg.net, seed=0)
        dis = build_discriminator(cfg.net, seed=1)
        pair = augment(toy_pair(), np.random.default_rng(0), cfg.input_size)[0]
        for _ in range(2):
            train_step(gen, dis, [pair], cfg, cfg.lr0, None)
        path = tmp_path / "c.ednw"
        save_checkpoint(path, gen, dis, cfg, epoch=2)
        bundle = load_checkpoint(path)
        assert bundle.epoch == 2
        for name, _ in gen.params.tensors():
            m0, v0, t0 = gen.params.moment_state(name)
            m1, v1, t1 = bundle.generator.params.moment_state(name)
            assert t0 == t1 == 2
            np.testing.assert_array_equal(m0, m1)
            np.testing.assert_array_equal(v0, v1)

    def test_missing_tensor_never_partially_applies(self, tmp_path):
        from hazelab.checkpoint import CheckpointError, read_archive, write_archive

        cfg = toy_cfg()
        gen = build_generator(cfg.net, seed=0)
        dis = build_discriminator(cfg.net, seed=1)
        path = tmp_path / "d.ednw"
        save_checkpoint(path, gen, dis, cfg, epoch=0)
        tensors, meta = read_archive(path)
        del tensors["gen.head.w"]
        write_archive(path, tensors, meta)
        with pytest.raises(CheckpointError, match="missing tensor"):
            load_checkpoint(path)


class TestTrainLoop:
    def test_two_epochs_logs_and_checkpoints(self, tmp_path):
        root = tmp_path / "data"
        write_dataset(root)
        out = tmp_path / "run"
        cfg = toy_cfg(data_root=str(root), out_dir=str(out), epochs=2)
        result = train_loop(cfg)
        assert len(result.epoch_rows) == 2
        log_lines = (out / "train_log.tsv").read_text().strip().splitlines()
        assert len(log_lines) == 2
        assert all(len(line.split("\t")) == 8 for line in log_lines)
        assert (out / "final.ednw").is_file()
        assert (out / "ckpt_epoch0001.ednw").is_file()
        # guidance cache materialized next to the dataset
        assert sorted(p.name for p in (root / "tmap").iterdir()) == ["im0.png", "im1.png", "im2.png"]
        bundle = load_checkpoint(out / "final.ednw")
        for name, t in result.generator.params.tensors():
            np.testing.assert_array_equal(t.data, bundle.generator.params[name].data)

    def test_same_seed_identical_trajectory(self, tmp_path):
        root = tmp_path / "data"
        write_dataset(root, n=2)
        cfg_a = toy_cfg(data_root=str(root), out_dir=None, epochs=1)
        cfg_b = toy_cfg(data_root=str(root), out_dir=None, epochs=1)
        ra = train_loop(cfg_a)
        rb = train_loop(cfg_b)
        assert [r["l_mse"] for r in ra.step_reports] == [r["l_mse"] for r in rb.step_reports]

    def test_resume_matches_uninterrupted(self, tmp_path):
        root = tmp_path / "data"
        write_dataset(root, n=2)
        out_full = tmp_path / "full"
        out_head = tmp_path / "head"
        full = train_loop(toy_cfg(data_root=str(root), out_dir=str(out_full), epochs=3))
        train_loop(toy_cfg(data_root=str(root), out_dir=str(out_head), epochs=1))
        resumed = train_loop(
            toy_cfg(data_root=str(root), out_dir=None, epochs=3),
            resume_from=out_head / "final.ednw",
        )
        tail_full = [r for r in full.step_reports if r["epoch"] >= 1]
        for a, b in zip(tail_full, resumed.step_reports):
            assert abs(a["l_mse"] - b["l_mse"]) <= 1e-6
            assert abs(a["l_D"] - b["l_D"]) <= 1e-6

    def test_missing_gt_is_fatal_with_path(self, tmp_path):
        root = tmp_path / "data"
        write_dataset(root, n=2)
        (root / "gt" / "im1.png").unlink()
        with pytest.raises(FileNotFoundError, match="im1.png"):
            list_pairs(root)

    def test_epoch_rng_deterministic(self):
        a = epoch_rng(7, 3).random(5)
        b = epoch_rng(7, 3).random(5)
        c = epoch_rng(7, 4).random(5)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_guidance_inversion_mode(self):
        from hazelab.trainer import stack_guidance

        t = np.array([[0.2, 0.7], [1.0, 0.0]], dtype=np.float32)
        plain = stack_guidance([t], "t")
        inverted = stack_guidance([t], "one_minus_t")
        np.testing.assert_array_equal(plain.data[0, 0], t)
        np.testing.assert_allclose(inverted.data[0, 0], 1.0 - t, atol=1e-7)

    def test_paper_verbatim_sign_mode_runs(self):
        cfg = toy_cfg(sign_mode="paper-verbatim", weights=LossWeights(1.0, 1.0, 0.0, 1.0))
        gen = build_generator(cfg.net, seed=0)
        dis = build_discriminator(cfg.net, seed=1)
        pair = augment(toy_pair(), np.random.default_rng(0), cfg.input_size)[0]
        r_verbatim = train_step(gen, dis, [pair], cfg, cfg.lr0, None)
        assert math.isfinite(r_verbatim["l_D"])

    def test_log_row_format(self):
        row = dict(epoch=3, lr=1e-4, l_adv=-0.1, l_mse=0.5, l_per=0.2, l_I=55.0, l_D=0.01, seconds=1.234)
        parts = format_log_row(row).split("\t")
        assert parts[0] == "3"
        assert float(parts[1]) == 1e-4
        assert parts[-1] == "1.234"

    def test_config_validation(self):
        with pytest.raises(ValueError, match="divisible"):
            toy_cfg(input_size=17).validate()
        with pytest.raises(ValueError, match="lr0"):
            toy_cfg(lr0=0.0).validate()
        with pytest.raises(ValueError, match="decay_start"):
            toy_cfg(epochs=5, decay_start_epoch=9).validate()
