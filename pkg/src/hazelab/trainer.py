"""Training orchestration: augmentation, schedule, alternating updates,
checkpointing, and deterministic resumability.

All per-epoch randomness (shuffle order, crop geometry) is drawn from a
generator derived from (seed, epoch), so a run resumed from a checkpoint
consumes exactly the streams the uninterrupted run would have.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dcp
from .checkpoint import CheckpointError, read_archive, write_archive
from .imgio import load_image, resize_bilinear, save_image
from .losses import (
    FeatureExtractor,
    LossWeights,
    adversarial_loss,
    build_feature_extractor,
    critic_loss,
    integral_loss,
    mse_loss,
    perceptual_loss,
)
from .models import (
    DiscriminatorState,
    GeneratorState,
    NetSpec,
    build_discriminator,
    build_generator,
    discriminator_forward,
    generator_forward,
)
from .nn import Tensor, adam_step

log = logging.getLogger("hazelab.trainer")

LOG_FIELDS = ("epoch", "lr", "l_adv", "l_mse", "l_per", "l_I", "l_D", "seconds")


@dataclass
class TrainConfig:
    data_root: str = ""
    out_dir: str | None = None
    epochs: int = 400
    lr0: float = 1e-4
    decay_start_epoch: int | None = None  # None = epochs // 2
    batch_size: int = 1
    input_size: int = 512
    critic_steps: int = 1
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    sign_mode: str = "functional"
    checkpoint_interval: int = 50
    weight_clip: float = 0.0  # 0 disables
    crop_scale: tuple[float, float] = (0.8, 1.0)
    guidance_mode: str = "t"  # t | one_minus_t
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    net: NetSpec = field(default_factory=NetSpec)
    dcp_params: dcp.DcpParams = field(default_factory=dcp.DcpParams)

    @property
    def decay_start(self) -> int:
        if self.decay_start_epoch is None:
            return max(1, self.epochs // 2)
        return self.decay_start_epoch

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if not 1 <= self.decay_start <= self.epochs:
            raise ValueError(
                f"decay_start_epoch must be in [1, {self.epochs}], got {self.decay_start}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.critic_steps < 0:
            raise ValueError(f"critic_steps must be >= 0, got {self.critic_steps}")
        if self.input_size % self.net.multiple != 0:
            raise ValueError(
                f"input_size {self.input_size} must be divisible by {self.net.multiple} "
                f"(depth {self.net.depth})"
            )
        if self.guidance_mode not in ("t", "one_minus_t"):
            raise ValueError(f"unknown guidance_mode {self.guidance_mode!r}")
        if not 0.0 < self.crop_scale[0] <= self.crop_scale[1] <= 1.0:
            raise ValueError(f"crop_scale must satisfy 0 < lo <= hi <= 1, got {self.crop_scale}")
        self.weights.validate()
        self.net.validate()


@dataclass
class SamplePair:
    hazy: np.ndarray  # (H, W, 3) in [0, 1]
    clear: np.ndarray  # (H, W, 3)
    guidance: np.ndarray | None  # (H, W) transmission raster


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Constant lr0 before the decay start, then linear decay; the final
    epoch still has a positive rate."""
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} out of range [0, {cfg.epochs})")
    ds = cfg.decay_start
    if epoch < ds:
        return cfg.lr0
    return cfg.lr0 * (cfg.epochs - epoch) / (cfg.epochs - ds)


# ---------------------------------------------------------------------------
# augmentation


def sample_crop_boxes(
    h: int,
    w: int,
    rng: np.random.Generator,
    count: int = 5,
    scale_range: tuple[float, float] = (0.8, 1.0),
) -> list[tuple[int, int, int, int]]:
    """(top, left, crop_h, crop_w) boxes with the source aspect ratio
    preserved up to 1-pixel rounding."""
    boxes = []
    for _ in range(count):
        s = rng.uniform(scale_range[0], scale_range[1])
        ch = max(1, int(round(s * h)))
        # derive the width from the rounded height so the ratio stays within
        # half a pixel of the original
        cw = min(w, max(1, int(round(ch * w / h))))
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        boxes.append((top, left, ch, cw))
    return boxes


def augment(
    pair: SamplePair,
    rng: np.random.Generator,
    input_size: int,
    scale_range: tuple[float, float] = (0.8, 1.0),
    crops: int = 5,
) -> list[SamplePair]:
    """Random crops plus horizontal mirrors: 5 crops x 2 = 10 pairs.

    The same crop box and resize apply to the hazy image, the clear image
    and the guidance raster; mirrors are exact width reversals.
    """
    h, w = pair.hazy.shape[:2]
    if pair.clear.shape[:2] != (h, w) or (
        pair.guidance is not None and pair.guidance.shape != (h, w)
    ):
        raise ValueError("sample rasters disagree on extents")
    if h < 2 or w < 2:
        warnings.warn(f"skipping degenerate {h}x{w} sample in augmentation")
        return []
    out = []
    for top, left, ch, cw in sample_crop_boxes(h, w, rng, count=crops, scale_range=scale_range):
        def cut(a: np.ndarray) -> np.ndarray:
            return resize_bilinear(a[top : top + ch, left : left + cw], input_size, input_size)

        hz = cut(pair.hazy)
        cl = cut(pair.clear)
        gd = cut(pair.guidance) if pair.guidance is not None else None
        out.append(SamplePair(hz, cl, gd))
        out.append(
            SamplePair(
                hz[:, ::-1].copy(),
                cl[:, ::-1].copy(),
                gd[:, ::-1].copy() if gd is not None else None,
            )
        )
    return out


# ---------------------------------------------------------------------------
# tensor packing


def stack_images(images: list[np.ndarray]) -> Tensor:
    """list of (H, W, 3) -> Tensor (N, 3, H, W) float32."""
    arr = np.stack([im.transpose(2, 0, 1) for im in images]).astype(np.float32)
    return Tensor(arr)


def stack_guidance(rasters: list[np.ndarray], mode: str) -> Tensor:
    arr = np.stack(rasters).astype(np.float32)[:, None, :, :]
    if mode == "one_minus_t":
        arr = 1.0 - arr
    return Tensor(arr)


# ---------------------------------------------------------------------------
# dataset layout: root/hazy/NAME.png + root/gt/NAME.png + cached root/tmap/NAME.png


def list_pairs(root: str | Path) -> list[str]:
    root = Path(root)
    hazy_dir = root / "hazy"
    gt_dir = root / "gt"
    if not hazy_dir.is_dir():
        raise FileNotFoundError(f"dataset layout violation: missing directory {hazy_dir}")
    if not gt_dir.is_dir():
        raise FileNotFoundError(f"dataset layout violation: missing directory {gt_dir}")
    names = sorted(p.name for p in hazy_dir.iterdir() if p.suffix.lower() == ".png")
    if not names:
        raise FileNotFoundError(f"dataset layout violation: no .png files under {hazy_dir}")
    for name in names:
        if not (gt_dir / name).is_file():
            raise FileNotFoundError(f"dataset layout violation: missing {gt_dir / name}")
    return names


def load_sample(root: str | Path, name: str, cfg: TrainConfig) -> SamplePair:
    """Load one training pair; the guidance raster is computed by the
    classical pipeline once and cached under root/tmap as 8-bit PNG."""
    root = Path(root)
    hazy = load_image(root / "hazy" / name)
    clear = load_image(root / "gt" / name)
    if hazy.ndim != 3 or clear.ndim != 3:
        raise ValueError(f"dataset images must be 3-channel: {name}")
    guidance = None
    if cfg.net.in_channels == 4:
        tmap_path = root / "tmap" / name
        if tmap_path.is_file():
            guidance = load_image(tmap_path)
            if guidance.ndim != 2:
                raise ValueError(f"cached guidance must be grayscale: {tmap_path}")
        else:
            _, t_refined, _ = dcp.dcp_dehaze(hazy, cfg.dcp_params)
            tmap_path.parent.mkdir(parents=True, exist_ok=True)
            save_image(t_refined, tmap_path)
            guidance = load_image(tmap_path)  # reload so cached and fresh runs agree
    return SamplePair(hazy, clear, guidance)


# ---------------------------------------------------------------------------
# optimization steps


def train_step(
    gen: GeneratorState,
    dis: DiscriminatorState,
    batch: list[SamplePair],
    cfg: TrainConfig,
    lr: float,
    fe: FeatureExtractor | None,
) -> dict[str, float]:
    """critic_steps critic updates (generator frozen) then one generator
    update (critic frozen).  Returns the step report; aborts on any
    non-finite loss."""
    if not batch:
        raise ValueError("train_step requires a nonempty batch")
    w = cfg.weights
    rgb = stack_images([p.hazy for p in batch])
    clear = stack_images([p.clear for p in batch])
    guidance = None
    if gen.spec.in_channels == 4:
        if any(p.guidance is None for p in batch):
            raise ValueError("model takes a guidance channel but the batch has none")
        guidance = stack_guidance([p.guidance for p in batch], cfg.guidance_mode)

    gen.params.zero_grad()
    fake = generator_forward(gen, rgb, guidance)
    fake_frozen = fake.detach()

    l_d_val = 0.0
    for _ in range(cfg.critic_steps):
        dis.params.zero_grad()
        d_real = discriminator_forward(dis, clear)
        d_fake = discriminator_forward(dis, fake_frozen)
        l_d = critic_loss(d_real, d_fake, w.w4, cfg.sign_mode)
        l_d.backward()
        adam_step(dis.params, dis.params.grads(), lr, cfg.beta1, cfg.beta2, cfg.eps)
        if cfg.weight_clip > 0:
            dis.params.clip_values(cfg.weight_clip)
        l_d_val = l_d.item()

    dis.params.zero_grad()
    l_mse = mse_loss(fake, clear)
    zero = Tensor(np.zeros((), dtype=np.float32))
    l_adv = adversarial_loss(discriminator_forward(dis, fake)) if w.w1 > 0 else zero
    l_per = perceptual_loss(fake, clear, fe) if (w.w3 > 0 and fe is not None) else zero
    l_i = integral_loss(l_adv, l_mse, l_per, w)
    l_i.backward()
    adam_step(gen.params, gen.params.grads(), lr, cfg.beta1, cfg.beta2, cfg.eps)

    report = {
        "l_adv": l_adv.item(),
        "l_mse": l_mse.item(),
        "l_per": l_per.item(),
        "l_I": l_i.item(),
        "l_D": l_d_val,
        "lr": lr,
    }
    for key, value in report.items():
        if not math.isfinite(value):
            raise RuntimeError(f"training aborted: non-finite {key} = {value}")
    return report


# ---------------------------------------------------------------------------
# checkpointing


@dataclass
class CheckpointBundle:
    generator: GeneratorState
    discriminator: DiscriminatorState
    epoch: int
    cfg_echo: dict


def _spec_to_meta(spec: NetSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["spp_kernels"] = list(d["spp_kernels"])
    return d


def _spec_from_meta(meta: dict) -> NetSpec:
    meta = dict(meta)
    meta["spp_kernels"] = tuple(meta["spp_kernels"])
    return NetSpec(**meta)


def _cfg_to_meta(cfg: TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["net"] = _spec_to_meta(cfg.net)
    d["crop_scale"] = list(cfg.crop_scale)
    d["weights"] = dataclasses.asdict(cfg.weights)
    d["dcp_params"] = dataclasses.asdict(cfg.dcp_params)
    return d


def save_checkpoint(
    path: str | Path,
    gen: GeneratorState,
    dis: DiscriminatorState,
    cfg: TrainConfig | dict,
    epoch: int,
) -> None:
    """Persist parameters, optimizer moments, step counters and the rng
    record (seed + epoch; per-epoch streams are derived from them).

    ``cfg`` may be a loaded checkpoint's config echo, so that
    save -> load -> save is byte-identical.
    """
    cfg_meta = _cfg_to_meta(cfg) if isinstance(cfg, TrainConfig) else dict(cfg)
    tensors: dict[str, np.ndarray] = {}
    steps: dict[str, dict[str, int]] = {"gen": {}, "dis": {}}
    for prefix, state in (("gen", gen), ("dis", dis)):
        for name, t in state.params.tensors():
            tensors[f"{prefix}.{name}"] = t.data
            m, v, count = state.params.moment_state(name)
            tensors[f"opt.{prefix}.m.{name}"] = m
            tensors[f"opt.{prefix}.v.{name}"] = v
            steps[prefix][name] = count
    meta = {
        "kind": "train-state",
        "epoch": int(epoch),
        "steps": steps,
        "spec": _spec_to_meta(gen.spec),
        "cfg": cfg_meta,
        "rng": {"seed": int(cfg_meta.get("seed", 0)), "epoch": int(epoch)},
    }
    write_archive(path, tensors, meta)


def load_checkpoint(path: str | Path) -> CheckpointBundle:
    """Rebuild generator/discriminator states; validates every tensor before
    constructing anything, so a bad file never half-applies."""
    tensors, meta = read_archive(path)
    if meta.get("kind") != "train-state":
        raise CheckpointError(f"archive at {path} is not a training checkpoint", 12)
    spec = _spec_from_meta(meta["spec"])
    gen = build_generator(spec, seed=0)
    dis = build_discriminator(spec, seed=0)
    for prefix, state in (("gen", gen), ("dis", dis)):
        for name, t in state.params.tensors():
            for key in (f"{prefix}.{name}", f"opt.{prefix}.m.{name}", f"opt.{prefix}.v.{name}"):
                if key not in tensors:
                    raise CheckpointError(f"checkpoint missing tensor {key!r}", 12)
                if tensors[key].shape != t.data.shape:
                    raise CheckpointError(
                        f"checkpoint tensor {key!r} has shape {tensors[key].shape}, "
                        f"expected {t.data.shape}",
                        12,
                    )
    for prefix, state in (("gen", gen), ("dis", dis)):
        for name, t in state.params.tensors():
            t.data[...] = tensors[f"{prefix}.{name}"]
            state.params.set_moment_state(
                name,
                tensors[f"opt.{prefix}.m.{name}"],
                tensors[f"opt.{prefix}.v.{name}"],
                int(meta["steps"][prefix][name]),
            )
    return CheckpointBundle(gen, dis, int(meta["epoch"]), meta.get("cfg", {}))


# ---------------------------------------------------------------------------
# full loop


@dataclass
class TrainResult:
    generator: GeneratorState
    discriminator: DiscriminatorState
    epoch_rows: list[dict]
    step_reports: list[dict]
    final_checkpoint: Path | None


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def format_log_row(row: dict) -> str:
    return "\t".join(
        [
            str(row["epoch"]),
            f"{row['lr']:.8g}",
            f"{row['l_adv']:.8g}",
            f"{row['l_mse']:.8g}",
            f"{row['l_per']:.8g}",
            f"{row['l_I']:.8g}",
            f"{row['l_D']:.8g}",
            f"{row['seconds']:.3f}",
        ]
    )


def train_loop(cfg: TrainConfig, resume_from: str | Path | None = None) -> TrainResult:
    cfg.validate()
    names = list_pairs(cfg.data_root)

    start_epoch = 0
    if resume_from is not None:
        bundle = load_checkpoint(resume_from)
        if bundle.generator.spec != cfg.net:
            raise ValueError(
                f"checkpoint spec {bundle.generator.spec} does not match configured {cfg.net}"
            )
        gen, dis, start_epoch = bundle.generator, bundle.discriminator, bundle.epoch
    else:
        gen = build_generator(cfg.net, seed=cfg.seed)
        dis = build_discriminator(cfg.net, seed=cfg.seed + 1)
    fe = build_feature_extractor(seed=cfg.seed + 2) if cfg.weights.w3 > 0 else None

    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    log_path = None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.tsv"
        if start_epoch == 0 and log_path.exists():
            log_path.unlink()

    samples = {name: load_sample(cfg.data_root, name, cfg) for name in names}

    epoch_rows: list[dict] = []
    step_reports: list[dict] = []
    final_ckpt: Path | None = None
    for epoch in range(start_epoch, cfg.epochs):
        t_start = time.monotonic()
        rng = epoch_rng(cfg.seed, epoch)
        lr = lr_at(epoch, cfg)
        order = rng.permutation(len(names))
        sums = {k: 0.0 for k in ("l_adv", "l_mse", "l_per", "l_I", "l_D")}
        steps = 0
        for idx in order:
            pairs = augment(samples[names[idx]], rng, cfg.input_size, cfg.crop_scale)
            for lo in range(0, len(pairs), cfg.batch_size):
                report = train_step(gen, dis, pairs[lo : lo + cfg.batch_size], cfg, lr, fe)
                step_reports.append({"epoch": epoch, **report})
                for k in sums:
                    sums[k] += report[k]
                steps += 1
        seconds = time.monotonic() - t_start
        row = {
            "epoch": epoch,
            "lr": lr,
            **{k: (sums[k] / steps if steps else math.nan) for k in sums},
            "seconds": seconds,
        }
        epoch_rows.append(row)
        log.info("epoch %d: %s", epoch, row)
        if log_path:
            with open(log_path, "a", encoding="utf-8") as f:
                f.write(format_log_row(row) + "\n")
        if out_dir and cfg.checkpoint_interval > 0 and (epoch + 1) % cfg.checkpoint_interval == 0:
            save_checkpoint(out_dir / f"ckpt_epoch{epoch + 1:04d}.ednw", gen, dis, cfg, epoch + 1)

    if out_dir:
        final_ckpt = out_dir / "final.ednw"
        save_checkpoint(final_ckpt, gen, dis, cfg, cfg.epochs)
    return TrainResult(gen, dis, epoch_rows, step_reports, final_ckpt)
