"""Command-line entry points tying the toolkit together.

Subcommands: dcp, synth, train, infer, eval, augment, gradcheck.
Exit codes: 0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dcp, hazesim, metrics, trainer
from .checkpoint import CheckpointError
from .config import RunConfig
from .imgio import load_depth, load_image, save_image
from .losses import LossWeights
from .models import NetSpec, build_discriminator, build_generator, discriminator_forward, generator_forward
from .nn import ParamStore, Tensor, grad_check, mul, sum_all

log = logging.getLogger("hazelab.cli")


# ---------------------------------------------------------------------------
# config plumbing


def _load_config(args) -> RunConfig:
    rc = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        rc.set(key.strip(), value.strip())
    return rc


def _dcp_params(rc: RunConfig) -> dcp.DcpParams:
    return dcp.DcpParams(
        patch=rc.get_int("dcp.patch"),
        omega=rc.get_float("dcp.omega"),
        airlight_fraction=rc.get_float("dcp.airlight_fraction"),
        t0=rc.get_float("dcp.t0"),
        gf_radius=rc.get_int("dcp.gf_radius"),
        gf_eps=rc.get_float("dcp.gf_eps"),
    )


def _net_spec(rc: RunConfig) -> NetSpec:
    return NetSpec(
        in_channels=4,
        out_channels=3,
        depth=rc.get_int("net.depth"),
        base_width=rc.get_int("net.base_width"),
        spp_kernels=rc.get_ints("net.spp_kernels"),
        output_activation=rc.get_str("net.output_activation"),
        instance_norm=rc.get_bool("net.instance_norm"),
    )


def _train_config(rc: RunConfig, data_root: str, out_dir: str | None) -> trainer.TrainConfig:
    decay = rc.get_str("train.decay_start_epoch")
    return trainer.TrainConfig(
        data_root=data_root,
        out_dir=out_dir,
        epochs=rc.get_int("train.epochs"),
        lr0=rc.get_float("train.lr0"),
        decay_start_epoch=None if decay == "auto" else int(decay),
        batch_size=rc.get_int("train.batch_size"),
        input_size=rc.get_int("train.input_size"),
        critic_steps=rc.get_int("train.critic_steps"),
        seed=rc.get_int("train.seed"),
        weights=LossWeights(
            rc.get_float("train.w1"),
            rc.get_float("train.w2"),
            rc.get_float("train.w3"),
            rc.get_float("train.w4"),
        ),
        sign_mode=rc.get_str("train.sign_mode"),
        checkpoint_interval=rc.get_int("train.checkpoint_interval"),
        weight_clip=rc.get_float("train.weight_clip"),
        crop_scale=(rc.get_float("train.crop_lo"), rc.get_float("train.crop_hi")),
        guidance_mode=rc.get_str("dcp.guidance"),
        beta1=rc.get_float("adam.beta1"),
        beta2=rc.get_float("adam.beta2"),
        eps=rc.get_float("adam.eps"),
        net=_net_spec(rc),
        dcp_params=_dcp_params(rc),
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_dcp(args) -> int:
    rc = _load_config(args)
    params = _dcp_params(rc)
    img = load_image(args.input)
    if img.ndim != 3:
        raise ValueError(f"{args.input}: dehazing needs a 3-channel image")
    radiance, t_refined, airlight = dcp.dcp_dehaze(img, params)
    save_image(radiance, args.out)
    if args.emit_tmap:
        save_image(t_refined, args.emit_tmap)
    log.info("airlight estimate: %s", np.round(airlight, 4))
    return 0


def _cmd_synth(args) -> int:
    rc = _load_config(args)
    clear = load_image(args.clear)
    if clear.ndim != 3:
        raise ValueError(f"{args.clear}: haze synthesis needs a 3-channel image")
    depth = load_depth(args.depth)
    params = hazesim.HazeParams(
        beta=args.beta,
        beta_range=(rc.get_float("synth.beta_lo"), rc.get_float("synth.beta_hi")),
        airlight=rc.get_floats("synth.airlight"),
        seed=args.seed if args.seed is not None else rc.get_int("synth.seed"),
    )
    hazy, t, beta = hazesim.synthesize_pair(clear, depth, params)
    save_image(hazy, args.out)
    if args.emit_tmap:
        save_image(t, args.emit_tmap)
    log.info("synthesized with beta = %.6f", beta)
    return 0


def _cmd_train(args) -> int:
    rc = _load_config(args)
    cfg = _train_config(rc, args.data, args.out)
    result = trainer.train_loop(cfg, resume_from=args.resume)
    if result.epoch_rows:
        from .report import save_training_curves

        save_training_curves(result.epoch_rows, Path(args.out) / "curves.png")
    log.info("training done: %d epochs, final checkpoint %s", len(result.epoch_rows), result.final_checkpoint)
    return 0


def _pad_to_multiple(img: np.ndarray, m: int) -> tuple[np.ndarray, int, int]:
    h, w = img.shape[:2]
    ph = (m - h % m) % m
    pw = (m - w % m) % m
    if ph == 0 and pw == 0:
        return img, h, w
    mode = "reflect" if (ph < h and pw < w) else "edge"
    pad = ((0, ph), (0, pw)) + (((0, 0),) if img.ndim == 3 else ())
    return np.pad(img, pad, mode=mode), h, w


def _cmd_infer(args) -> int:
    rc = _load_config(args)
    bundle = trainer.load_checkpoint(args.checkpoint)
    gen = bundle.generator
    img = load_image(args.input)
    if img.ndim != 3:
        raise ValueError(f"{args.input}: inference needs a 3-channel image")
    params = _dcp_params(rc)
    _, t_refined, _ = dcp.dcp_dehaze(img, params)
    m = gen.spec.multiple
    if rc.get_bool("infer.pad_to_multiple"):
        rgb, h, w = _pad_to_multiple(img, m)
        guid, _, _ = _pad_to_multiple(t_refined, m)
    else:
        rgb, h, w = img, img.shape[0], img.shape[1]
        guid = t_refined
        if h % m or w % m:
            raise ValueError(f"input extents {h}x{w} must be divisible by {m}; enable infer.pad_to_multiple")
    rgb_t = trainer.stack_images([rgb])
    guid_t = None
    if gen.spec.in_channels == 4:
        guid_t = trainer.stack_guidance([guid], rc.get_str("dcp.guidance"))
    out = generator_forward(gen, rgb_t, guid_t)
    dehazed = out.data[0].transpose(1, 2, 0)[:h, :w]
    save_image(dehazed, args.out)
    if args.emit_tmap:
        save_image(t_refined, args.emit_tmap)
    return 0


def _cmd_eval(args) -> int:
    report = metrics.evaluate_dirs(args.pred, args.gt)
    Path(args.out).write_text(metrics.report_to_csv(report), encoding="utf-8")
    if args.fig:
        from .report import save_eval_figure

        save_eval_figure(report, args.fig)
    for name, reason in report.skipped:
        log.warning("skipped %s: %s", name, reason)
    if not report.rows:
        print("eval: no image pairs were scored", file=sys.stderr)
        return 1
    print(f"scored {len(report.rows)} pairs: mean PSNR {report.mean_psnr:.6f} dB, "
          f"mean SSIM {report.mean_ssim:.6f}")
    return 0


def _cmd_augment(args) -> int:
    rc = _load_config(args)
    hazy = load_image(args.hazy)
    clear = load_image(args.clear)
    guidance = load_image(args.tmap) if args.tmap else None
    pair = trainer.SamplePair(hazy, clear, guidance)
    rng = np.random.default_rng(args.seed)
    size = args.input_size or rc.get_int("train.input_size")
    scale = (rc.get_float("train.crop_lo"), rc.get_float("train.crop_hi"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = trainer.augment(pair, rng, size, scale)
    for i, p in enumerate(pairs):
        save_image(p.hazy, out_dir / f"aug{i:02d}_hazy.png")
        save_image(p.clear, out_dir / f"aug{i:02d}_gt.png")
        if p.guidance is not None:
            save_image(p.guidance, out_dir / f"aug{i:02d}_tmap.png")
    print(f"wrote {len(pairs)} augmented pairs to {out_dir}")
    return 0


def _cmd_gradcheck(args) -> int:
    spec = NetSpec(depth=args.depth, base_width=args.base)
    size = args.size
    if size % spec.multiple:
        raise ValueError(f"--size {size} must be divisible by {spec.multiple}")
    rng = np.random.default_rng(args.seed)
    gen = build_generator(spec, seed=args.seed)
    dis = build_discriminator(spec, seed=args.seed + 1)
    x = Tensor(rng.uniform(0.2, 0.8, size=(1, 4, size, size)).astype(np.float32))

    def gen_loss(params: ParamStore, inp: Tensor) -> Tensor:
        state = type(gen)(spec=spec, params=params)
        rgb = Tensor(inp.data[:, :3])
        guid = Tensor(inp.data[:, 3:4])
        out = generator_forward(state, rgb, guid)
        return sum_all(mul(out, out))

    def dis_loss(params: ParamStore, inp: Tensor) -> Tensor:
        state = type(dis)(spec=spec, params=params)
        out = discriminator_forward(state, Tensor(inp.data[:, :3]))
        return sum_all(mul(out, out))

    ok = True
    for label, state, closure in (("generator", gen, gen_loss), ("discriminator", dis, dis_loss)):
        rep = grad_check(closure, state.params, x, h=args.h, tolerance=args.tol, seed=args.seed)
        print(f"== {label}")
        for line in rep.format_lines():
            print(line)
        ok = ok and rep.passed
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# dispatcher


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hazelab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = sub.add_parser("dcp", help="classical dark-channel dehazing")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-tmap", help="also write the refined transmission map")
    common(p)
    p.set_defaults(func=_cmd_dcp)

    p = sub.add_parser("synth", help="synthesize a hazy image from clear + depth")
    p.add_argument("--clear", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-tmap", help="also write the true transmission map")
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=float, help="fixed scattering coefficient (skips sampling)")
    common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train the dehazing networks")
    p.add_argument("--data", required=True, help="dataset root containing hazy/ and gt/")
    p.add_argument("--out", required=True, help="output directory for logs and checkpoints")
    p.add_argument("--resume", help="checkpoint to resume from")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="dehaze with a trained generator")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--emit-tmap", help="also write the guidance transmission map")
    common(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM over paired directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--fig", help="also render a PNG figure of the report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("augment", help="materialize the crop/flip augmentation")
    p.add_argument("--hazy", required=True)
    p.add_argument("--clear", required=True)
    p.add_argument("--tmap")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input-size", type=int)
    common(p)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--base", type=int, default=8)
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, CheckpointError, RuntimeError) as e:
        print(f"hazelab {args.command}: error: {e}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    return cli_dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
