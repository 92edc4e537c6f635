"""Physically based haze synthesis from clear images and depth maps.

Haze forms by exponential attenuation with depth, t = exp(-beta * d), and
the observed image is the convex blend I = J * t + A * (1 - t).  Depth maps
are normalized to a maximum of 1 before use, and the scattering coefficient
is drawn uniformly from a configurable range so synthesized corpora cover
thin through dense haze.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class HazeParams:
    beta: float | None = None  # fixed coefficient; None samples from beta_range
    beta_range: tuple[float, float] = (1.0, 3.0)
    airlight: tuple[float, float, float] = (0.9, 0.9, 0.9)
    seed: int = 0

    def validate(self) -> None:
        if self.beta is not None and self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        lo, hi = self.beta_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"beta_range must satisfy 0 < lo <= hi, got {self.beta_range}")
        if any(not 0.0 <= a <= 1.0 for a in self.airlight):
            raise ValueError(f"airlight components must be in [0, 1], got {self.airlight}")


def derive_seed(seed: int, index: int) -> int:
    """Per-image seed so parallel synthesis stays order-independent."""
    return (int(seed) ^ int(index)) & 0xFFFFFFFFFFFFFFFF


def sample_beta(beta_range: tuple[float, float], rng: np.random.Generator) -> float:
    """Uniform draw from [lo, hi]; a degenerate range returns lo exactly."""
    lo, hi = beta_range
    if not 0.0 < lo <= hi:
        raise ValueError(f"beta_range must satisfy 0 < lo <= hi, got {beta_range}")
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def depth_to_transmission(depth: np.ndarray, beta: float) -> np.ndarray:
    """t = exp(-beta * d); output in (0, 1] for nonnegative depth."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    d = np.asarray(depth)
    if np.any(d < 0):
        raise ValueError("depth values must be nonnegative")
    return np.exp(-beta * d)


def apply_haze(clear: np.ndarray, t: np.ndarray, airlight) -> np.ndarray:
    """Blend the clear image toward the airlight: I = J*t + A*(1-t)."""
    if clear.ndim != 3 or clear.shape[2] != 3:
        raise ValueError(f"apply_haze expects an (H, W, 3) image, got shape {clear.shape}")
    if t.shape != clear.shape[:2]:
        raise ValueError(f"transmission shape {t.shape} does not match image {clear.shape[:2]}")
    a = np.asarray(airlight, dtype=clear.dtype).reshape(1, 1, 3)
    tt = t.astype(clear.dtype)[..., None]
    return np.clip(clear * tt + a * (1.0 - tt), 0.0, 1.0)


def normalize_depth(depth: np.ndarray) -> np.ndarray:
    """Scale depth so its maximum is 1; an all-zero map is returned as-is."""
    d = np.asarray(depth, dtype=np.float64)
    peak = d.max() if d.size else 0.0
    if peak <= 0:
        return d
    return d / peak


def synthesize_pair(
    clear: np.ndarray, depth: np.ndarray, params: HazeParams
) -> tuple[np.ndarray, np.ndarray, float]:
    """Clear image + depth map -> (hazy image, true transmission, beta used)."""
    params.validate()
    if depth.shape != clear.shape[:2]:
        raise ValueError(f"depth shape {depth.shape} does not match image {clear.shape[:2]}")
    d = normalize_depth(depth)
    if d.max() <= 0:
        warnings.warn("all-zero depth map: output is haze-free (t = 1 everywhere)")
    if params.beta is not None:
        beta = float(params.beta)
    else:
        rng = np.random.default_rng(params.seed)
        beta = sample_beta(params.beta_range, rng)
    t = depth_to_transmission(d, beta)
    hazy = apply_haze(clear, t, params.airlight)
    return hazy, t, beta
