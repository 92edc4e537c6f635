"""Shared fixtures: deterministic synthetic scenes and depth maps."""

from __future__ import annotations

import numpy as np
import pytest

from hazelab.imgio import resize_bilinear


def make_scene(rng: np.random.Generator, h: int, w: int, spot_hi: float = 0.05) -> np.ndarray:
    """Smooth random color field with a jittered grid of near-black spots,
    so every medium-size window contains a dark pixel."""
    base = rng.uniform(0.15, 0.95, size=(6, 6, 3))
    img = resize_bilinear(base.astype(np.float64), h, w)
    step = 8
    for gy in range(0, h - 2, step):
        for gx in range(0, w - 2, step):
            y = min(gy + int(rng.integers(0, max(1, step - 2))), h - 2)
            x = min(gx + int(rng.integers(0, max(1, step - 2))), w - 2)
            img[y : y + 2, x : x + 2] *= rng.uniform(0.0, spot_hi)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_depth(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random linear ramp plus one Gaussian hill, values strictly positive."""
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    a, b = rng.uniform(-1, 1, 2)
    d = 0.35 + 0.5 * (a * xx + b * yy + 1.0) / 2.0
    cy, cx, s = rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.08, 0.2)
    return d + 0.4 * np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s)))


def make_smooth_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Spot-free smooth color field (for tests that need clean statistics)."""
    base = rng.uniform(0.15, 0.95, size=(5, 5, 3))
    return np.clip(resize_bilinear(base.astype(np.float64), h, w), 0.0, 1.0).astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
