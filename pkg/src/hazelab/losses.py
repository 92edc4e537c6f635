"""Generator and critic objectives, plus the perceptual feature extractor.

The generator minimizes w1 * adversarial + w2 * MSE + w3 * perceptual; the
critic minimizes a difference of mean scores.  The printed form of the
critic objective and the sign that actually opposes the generator differ,
so both are implemented behind ``sign_mode`` ("functional" is the default
and is the adversarial one).

The perceptual distance compares activations of a frozen convolutional
stack with the classic 64,64 / 128,128 / 256,256,256 channel schedule,
truncated after the third 256-wide conv.  By default its weights are
seeded random projections (fixed, never trained); externally converted
pretrained weights can be loaded from the shared archive format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import read_archive, write_archive
from .nn import ParamStore, Tensor, add, conv2d, maxpool2d, mean_all, mul, relu, scale, sub


@dataclass(frozen=True)
class LossWeights:
    w1: float = 100.0
    w2: float = 100.0
    w3: float = 100.0
    w4: float = 1.0

    def validate(self) -> None:
        if min(self.w1, self.w2, self.w3, self.w4) < 0:
            raise ValueError(f"loss weights must be nonnegative, got {self}")


def adversarial_loss(d_fake_scores: Tensor) -> Tensor:
    """Mean of negated critic scores on generated images."""
    if d_fake_scores.size < 1:
        raise ValueError("adversarial_loss requires a nonempty batch")
    return mean_all(scale(d_fake_scores, -1.0))


def mse_loss(generated: Tensor, truth: Tensor) -> Tensor:
    """Mean squared difference over all elements."""
    if generated.shape != truth.shape:
        raise ValueError(f"mse_loss shape mismatch: {generated.shape} vs {truth.shape}")
    diff = sub(generated, truth)
    return mean_all(mul(diff, diff))


def integral_loss(l_adv: Tensor, l_mse: Tensor, l_per: Tensor, w: LossWeights) -> Tensor:
    return add(add(scale(l_adv, w.w1), scale(l_mse, w.w2)), scale(l_per, w.w3))


def critic_loss(d_real: Tensor, d_fake: Tensor, w4: float, sign_mode: str = "functional") -> Tensor:
    """Critic objective over matched batches of real and generated scores.

    "functional" minimizes mean(D(fake) - D(real)), which opposes the
    generator objective; "paper-verbatim" is its negation.
    """
    if d_real.shape != d_fake.shape:
        raise ValueError(f"critic_loss batch mismatch: {d_real.shape} vs {d_fake.shape}")
    if sign_mode == "functional":
        diff = sub(d_fake, d_real)
    elif sign_mode == "paper-verbatim":
        diff = sub(d_real, d_fake)
    else:
        raise ValueError(f"unknown sign_mode {sign_mode!r}")
    return scale(mean_all(diff), w4)


# ---------------------------------------------------------------------------
# perceptual features

# (name, cin, cout); "pool" marks a 2x2 stride-2 max-pool between blocks
_FE_SCHEDULE: tuple = (
    ("conv1_1", 3, 64),
    ("conv1_2", 64, 64),
    "pool",
    ("conv2_1", 64, 128),
    ("conv2_2", 128, 128),
    "pool",
    ("conv3_1", 128, 256),
    ("conv3_2", 256, 256),
    ("conv3_3", 256, 256),
)


class FeatureExtractor:
    """Frozen convolutional stack producing the perceptual feature map."""

    def __init__(self, params: ParamStore):
        for step in _FE_SCHEDULE:
            if step == "pool":
                continue
            name, cin, cout, k = step[0], step[1], step[2], 3
            for suffix, shape in ((".w", (cout, cin, k, k)), (".b", (cout,))):
                key = name + suffix
                if key not in params:
                    raise ValueError(f"feature extractor weights missing {key!r}")
                if params[key].shape != shape:
                    raise ValueError(
                        f"feature extractor weight {key!r} has shape {params[key].shape}, expected {shape}"
                    )
        self.params = params

    def features(self, x: Tensor) -> Tensor:
        if x.data.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"feature extractor expects (N,3,H,W) input, got {x.shape}")
        if x.shape[2] % 4 != 0 or x.shape[3] % 4 != 0:
            raise ValueError(f"feature extractor input extents {x.shape[2:]} must be divisible by 4")
        for step in _FE_SCHEDULE:
            if step == "pool":
                x = maxpool2d(x, 2, stride=2)
            else:
                name = step[0]
                x = relu(conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"]))
        return x


def build_feature_extractor(seed: int) -> FeatureExtractor:
    """Seeded random frozen weights (Kaiming-scaled, never trained)."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for step in _FE_SCHEDULE:
        if step == "pool":
            continue
        name, cin, cout = step
        std = np.sqrt(2.0 / (cin * 9))
        store.add(f"{name}.w", rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(np.float32),
                  requires_grad=False)
        store.add(f"{name}.b", np.zeros(cout, dtype=np.float32), requires_grad=False)
    return FeatureExtractor(store)


def save_feature_extractor(fe: FeatureExtractor, path: str | Path) -> None:
    write_archive(path, {name: t.data for name, t in fe.params.tensors()}, meta={"kind": "features"})


def load_feature_extractor(path: str | Path) -> FeatureExtractor:
    """Ingest externally converted pretrained weights from the archive format."""
    tensors, _ = read_archive(path)
    store = ParamStore()
    for name, arr in sorted(tensors.items()):
        store.add(name, arr, requires_grad=False)
    return FeatureExtractor(store)


def perceptual_loss(generated: Tensor, truth: Tensor, fe: FeatureExtractor) -> Tensor:
    """MSE between feature maps; gradients flow into ``generated`` only."""
    if generated.shape != truth.shape:
        raise ValueError(f"perceptual_loss shape mismatch: {generated.shape} vs {truth.shape}")
    fa = fe.features(generated)
    fb = fe.features(truth.detach())
    diff = sub(fa, fb)
    return mean_all(mul(diff, diff))
