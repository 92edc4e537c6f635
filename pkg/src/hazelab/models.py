"""Transmission-guided encoder-decoder generator and its critic.

The generator is a U-Net variant over a 4-channel input (RGB plus the
refined transmission raster): each encoder stage runs two 3x3 conv+Swish
blocks plus one extra 3x3 conv+Swish before the 2x2 max-pool downscale,
channel width doubling per stage.  The bottleneck runs a spatial-pyramid
max-pooling block, and the decoder mirrors the encoder with nearest-2x
upsampling followed by a 3x3 conv, skip concatenation and the extra conv
before each upscale.  A final 1x1 conv plus sigmoid maps back to RGB.

The critic reuses the encoder stage schedule on a plain 3-channel image
and reduces to one unbounded scalar per sample via global average pooling
and a linear head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (
    ParamStore,
    Tensor,
    concat_channels,
    conv2d,
    global_avg_pool,
    instance_norm,
    linear,
    maxpool2d,
    sigmoid,
    swish,
    upsample_nearest2x,
)


@dataclass(frozen=True)
class NetSpec:
    in_channels: int = 4
    out_channels: int = 3
    depth: int = 4
    base_width: int = 64
    spp_kernels: tuple[int, ...] = (5, 9, 13)
    output_activation: str = "sigmoid"
    instance_norm: bool = False

    def validate(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_width < 1:
            raise ValueError(f"base_width must be >= 1, got {self.base_width}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if len(set(self.spp_kernels)) != len(self.spp_kernels):
            raise ValueError(f"spp_kernels must be distinct, got {self.spp_kernels}")
        for k in self.spp_kernels:
            if k % 2 == 0 or k < 1:
                raise ValueError(f"spp_kernels must be odd, got {self.spp_kernels}")
        if self.output_activation not in ("sigmoid", "linear"):
            raise ValueError(f"unknown output_activation {self.output_activation!r}")

    def width(self, stage: int) -> int:
        return self.base_width << stage

    @property
    def multiple(self) -> int:
        return 1 << self.depth


@dataclass
class GeneratorState:
    spec: NetSpec
    params: ParamStore


@dataclass
class DiscriminatorState:
    spec: NetSpec
    params: ParamStore


def _conv_layers_generator(spec: NetSpec) -> list[tuple[str, int, int, int]]:
    """(name, cin, cout, kernel) for every conv in forward order."""
    layers = []
    cin = spec.in_channels
    for s in range(spec.depth):
        w = spec.width(s)
        layers += [
            (f"enc{s}.conv1", cin, w, 3),
            (f"enc{s}.conv2", w, w, 3),
            (f"enc{s}.pre_down", w, w, 3),
        ]
        cin = w
    wb = spec.width(spec.depth)
    layers += [("mid.conv1", cin, wb, 3), ("mid.conv2", wb, wb, 3)]
    if spec.spp_kernels:
        layers.append(("mid.spp_fuse", wb * (1 + len(spec.spp_kernels)), wb, 1))
    cur = wb
    for s in reversed(range(spec.depth)):
        w = spec.width(s)
        layers += [
            (f"dec{s}.pre_up", cur, cur, 3),
            (f"dec{s}.up", cur, w, 3),
            (f"dec{s}.conv1", 2 * w, w, 3),
            (f"dec{s}.conv2", w, w, 3),
        ]
        cur = w
    layers.append(("head", cur, spec.out_channels, 1))
    return layers


def _conv_layers_encoder(spec: NetSpec, in_channels: int) -> list[tuple[str, int, int, int]]:
    layers = []
    cin = in_channels
    for s in range(spec.depth):
        w = spec.width(s)
        layers += [
            (f"enc{s}.conv1", cin, w, 3),
            (f"enc{s}.conv2", w, w, 3),
            (f"enc{s}.pre_down", w, w, 3),
        ]
        cin = w
    return layers


def _init_conv(store: ParamStore, name: str, cin: int, cout: int, k: int, rng: np.random.Generator) -> None:
    fan_in = cin * k * k
    std = np.sqrt(2.0 / fan_in)
    store.add(f"{name}.w", (rng.normal(0.0, std, size=(cout, cin, k, k))).astype(np.float32))
    store.add(f"{name}.b", np.zeros(cout, dtype=np.float32))


def build_generator(spec: NetSpec, seed: int) -> GeneratorState:
    spec.validate()
    store = ParamStore()
    rng = np.random.default_rng(seed)
    for name, cin, cout, k in _conv_layers_generator(spec):
        _init_conv(store, name, cin, cout, k, rng)
    return GeneratorState(spec=spec, params=store)


def build_discriminator(spec: NetSpec, seed: int) -> DiscriminatorState:
    spec.validate()
    store = ParamStore()
    rng = np.random.default_rng(seed)
    for name, cin, cout, k in _conv_layers_encoder(spec, in_channels=3):
        _init_conv(store, name, cin, cout, k, rng)
    feat = spec.width(spec.depth - 1)
    std = np.sqrt(2.0 / feat)
    store.add("head.w", rng.normal(0.0, std, size=(1, feat)).astype(np.float32))
    store.add("head.b", np.zeros(1, dtype=np.float32))
    return DiscriminatorState(spec=spec, params=store)


def _conv_act(store: ParamStore, name: str, x: Tensor, spec: NetSpec) -> Tensor:
    y = conv2d(x, store[f"{name}.w"], store[f"{name}.b"])
    if spec.instance_norm:
        y = instance_norm(y)
    return swish(y)


def spp_block(x: Tensor, kernels: tuple[int, ...], fuse_w: Tensor, fuse_b: Tensor) -> Tensor:
    """Spatial pyramid pooling: concat the input with stride-1 max-pools at
    each kernel size, then fuse back to the input width via 1x1 conv + Swish."""
    for k in kernels:
        if k % 2 == 0:
            raise ValueError(f"spp kernels must be odd, got {kernels}")
    branches = [x] + [maxpool2d(x, k, stride=1) for k in kernels]
    cat = concat_channels(*branches)
    c = x.shape[1]
    expect = (c, c * (1 + len(kernels)), 1, 1)
    if fuse_w.shape != expect:
        raise ValueError(f"spp fuse kernel shape {fuse_w.shape} must be {expect}")
    return swish(conv2d(cat, fuse_w, fuse_b))


def _check_divisible(h: int, w: int, spec: NetSpec, who: str) -> None:
    m = spec.multiple
    if h % m != 0 or w % m != 0:
        raise ValueError(f"{who} input extents {h}x{w} must be divisible by {m} (depth {spec.depth})")


def generator_forward(g: GeneratorState, rgb: Tensor, guidance: Tensor | None) -> Tensor:
    """Dehaze a batch: rgb (N,3,H,W) plus guidance (N,1,H,W) -> (N,3,H,W).

    Guidance is required exactly when the spec's in_channels is 4; pass
    None for the 3-channel ablation configuration.
    """
    spec = g.spec
    store = g.params
    n, c, h, w = rgb.shape
    _check_divisible(h, w, spec, "generator")
    if spec.in_channels == 4:
        if guidance is None:
            raise ValueError("generator built with in_channels=4 requires a guidance channel")
        if guidance.shape != (n, 1, h, w):
            raise ValueError(
                f"guidance shape {guidance.shape} must be ({n}, 1, {h}, {w})"
            )
        x = concat_channels(rgb, guidance)
    else:
        if guidance is not None:
            raise ValueError("generator built with in_channels=3 takes no guidance channel")
        x = rgb
    if x.shape[1] != spec.in_channels:
        raise ValueError(f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")

    skips = []
    for s in range(spec.depth):
        x = _conv_act(store, f"enc{s}.conv1", x, spec)
        x = _conv_act(store, f"enc{s}.conv2", x, spec)
        x = _conv_act(store, f"enc{s}.pre_down", x, spec)
        skips.append(x)
        x = maxpool2d(x, 2, stride=2)

    x = _conv_act(store, "mid.conv1", x, spec)
    x = _conv_act(store, "mid.conv2", x, spec)
    if spec.spp_kernels:
        x = spp_block(x, spec.spp_kernels, store["mid.spp_fuse.w"], store["mid.spp_fuse.b"])

    for s in reversed(range(spec.depth)):
        x = _conv_act(store, f"dec{s}.pre_up", x, spec)
        x = upsample_nearest2x(x)
        x = _conv_act(store, f"dec{s}.up", x, spec)
        x = concat_channels(x, skips[s])
        x = _conv_act(store, f"dec{s}.conv1", x, spec)
        x = _conv_act(store, f"dec{s}.conv2", x, spec)

    x = conv2d(x, store["head.w"], store["head.b"])
    if spec.output_activation == "sigmoid":
        x = sigmoid(x)
    return x


def discriminator_forward(d: DiscriminatorState, img: Tensor) -> Tensor:
    """Score a batch of images: (N,3,H,W) -> (N,1) unbounded reals."""
    spec = d.spec
    store = d.params
    n, c, h, w = img.shape
    if c != 3:
        raise ValueError(f"discriminator expects 3-channel input, got {c}")
    _check_divisible(h, w, spec, "discriminator")
    x = img
    for s in range(spec.depth):
        x = _conv_act(store, f"enc{s}.conv1", x, spec)
        x = _conv_act(store, f"enc{s}.conv2", x, spec)
        x = _conv_act(store, f"enc{s}.pre_down", x, spec)
        x = maxpool2d(x, 2, stride=2)
    x = global_avg_pool(x)
    return linear(x, store["head.w"], store["head.b"])
