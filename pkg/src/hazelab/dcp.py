"""Dark-channel-prior dehazing and transmission estimation.

Implements the classical pipeline: per-window dark channel, atmospheric
light selection, raw transmission from the haze imaging model, guided-filter
refinement, and radiance recovery.  The refined transmission map doubles as
the guidance channel fed to the neural dehazer.

Image conventions: 3-channel images are float arrays of shape (H, W, 3)
with values in [0, 1]; single-channel rasters (dark channel, transmission,
grayscale) are (H, W).  Window operations clamp at image borders; there is
no reflected or zero padding in this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class DcpParams:
    patch: int = 15
    omega: float = 0.95
    airlight_fraction: float = 0.001
    t0: float = 0.1
    gf_radius: int = 40
    gf_eps: float = 1e-3

    def validate(self) -> None:
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError(f"patch must be odd and >= 1, got {self.patch}")
        if not 0.0 < self.omega <= 1.0:
            raise ValueError(f"omega must be in (0, 1], got {self.omega}")
        if not 0.0 < self.airlight_fraction <= 1.0:
            raise ValueError(f"airlight_fraction must be in (0, 1], got {self.airlight_fraction}")
        if not 0.0 < self.t0 < 1.0:
            raise ValueError(f"t0 must be in (0, 1), got {self.t0}")
        if self.gf_radius < 1:
            raise ValueError(f"gf_radius must be >= 1, got {self.gf_radius}")
        if self.gf_eps <= 0.0:
            raise ValueError(f"gf_eps must be positive, got {self.gf_eps}")


AIRLIGHT_FLOOR = 0.05


def _window_min_1d(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    """Sliding minimum with the window clamped at the array ends.

    Edge replication is equivalent to clamping for a min filter: every
    replicated value is a copy of an in-window element.
    """
    r = (k - 1) // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    ap = np.pad(a, pad, mode="edge")
    return sliding_window_view(ap, k, axis=axis).min(axis=-1)


def dark_channel(img: np.ndarray, patch: int) -> np.ndarray:
    """Per-pixel min over channels, then min over the clamped patch window."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"dark_channel expects an (H, W, 3) image, got shape {img.shape}")
    if patch < 1 or patch % 2 == 0:
        raise ValueError(f"patch must be odd and >= 1, got {patch}")
    per_pixel = img.min(axis=2)
    return _window_min_1d(_window_min_1d(per_pixel, patch, axis=0), patch, axis=1)


def estimate_airlight(img: np.ndarray, dark: np.ndarray, fraction: float) -> np.ndarray:
    """Atmospheric light from the brightest dark-channel pixels.

    Pixels are ordered by (dark value, channel sum) descending with the
    row-major index as the final tie-break; among the top ceil(fraction*H*W)
    candidates the color with the largest channel sum wins.  Components are
    floored at 0.05 to keep later normalization bounded.
    """
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"estimate_airlight expects an (H, W, 3) image, got shape {img.shape}")
    if dark.shape != img.shape[:2]:
        raise ValueError(f"dark channel shape {dark.shape} does not match image {img.shape[:2]}")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    h, w = dark.shape
    n = int(np.ceil(fraction * h * w))
    flat_dark = dark.reshape(-1)
    chansum = img.reshape(-1, 3).sum(axis=1)
    order = np.lexsort((np.arange(flat_dark.size), -chansum, -flat_dark))
    candidates = order[:n]
    best = candidates[np.argmax(chansum[candidates])]
    a = img.reshape(-1, 3)[best].astype(np.float64)
    return np.maximum(a, AIRLIGHT_FLOOR)


def estimate_transmission(img: np.ndarray, airlight: np.ndarray, params: DcpParams) -> np.ndarray:
    """Raw transmission 1 - omega * dark_channel(img / A), clamped to [0, 1]."""
    params.validate()
    a = np.asarray(airlight, dtype=np.float64)
    if np.any(a <= 0):
        raise ValueError(f"airlight must be componentwise positive, got {a}")
    normalized = img / a.reshape(1, 1, 3)
    t = 1.0 - params.omega * dark_channel(normalized.astype(img.dtype), params.patch)
    return np.clip(t, 0.0, 1.0)


def _box_mean(a: np.ndarray, radius: int) -> np.ndarray:
    """Mean over (2r+1)^2 windows clamped at borders, via integral images."""
    h, w = a.shape
    s = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(a, axis=0, dtype=np.float64), axis=1, out=s[1:, 1:])
    r = radius
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    total = s[y1[:, None], x1[None, :]] - s[y0[:, None], x1[None, :]] \
        - s[y1[:, None], x0[None, :]] + s[y0[:, None], x0[None, :]]
    count = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return total / count


def guided_filter(guide: np.ndarray, src: np.ndarray, radius: int, eps: float) -> np.ndarray:
    """Edge-preserving smoothing of ``src`` steered by ``guide``.

    Per window: a = cov(guide, src) / (var(guide) + eps),
    b = mean(src) - a * mean(guide); the output blends the box means of a
    and b with the guide.  All window means clamp at borders.
    """
    if guide.ndim != 2 or src.ndim != 2:
        raise ValueError("guided_filter expects single-channel rasters")
    if guide.shape != src.shape:
        raise ValueError(f"guide shape {guide.shape} does not match src shape {src.shape}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    g = guide.astype(np.float64)
    p = src.astype(np.float64)
    mean_g = _box_mean(g, radius)
    mean_p = _box_mean(p, radius)
    corr_gp = _box_mean(g * p, radius)
    corr_gg = _box_mean(g * g, radius)
    var_g = corr_gg - mean_g * mean_g
    cov_gp = corr_gp - mean_g * mean_p
    a = cov_gp / (var_g + eps)
    b = mean_p - a * mean_g
    q = _box_mean(a, radius) * g + _box_mean(b, radius)
    return q.astype(src.dtype)


def recover_radiance(img: np.ndarray, t: np.ndarray, airlight: np.ndarray, t0: float) -> np.ndarray:
    """Invert the haze imaging model: J = (I - A) / max(t, t0) + A, clamped."""
    if not 0.0 < t0 < 1.0:
        raise ValueError(f"t0 must be in (0, 1), got {t0}")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"recover_radiance expects an (H, W, 3) image, got shape {img.shape}")
    if t.shape != img.shape[:2]:
        raise ValueError(f"transmission shape {t.shape} does not match image {img.shape[:2]}")
    a = np.asarray(airlight, dtype=img.dtype).reshape(1, 1, 3)
    denom = np.maximum(t, t0)[..., None]
    return np.clip((img - a) / denom + a, 0.0, 1.0).astype(img.dtype)


def grayscale(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an (H, W, 3) image."""
    return (0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]).astype(img.dtype)


def dcp_dehaze(
    img: np.ndarray, params: DcpParams | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full classical dehazing pass.

    Returns (dehazed image, refined transmission clamped to [t0, 1],
    atmospheric light).  The refined transmission is the guidance raster
    consumed by the neural dehazer.
    """
    params = params or DcpParams()
    params.validate()
    dark = dark_channel(img, params.patch)
    airlight = estimate_airlight(img, dark, params.airlight_fraction)
    t_raw = estimate_transmission(img, airlight, params)
    t_refined = guided_filter(grayscale(img), t_raw.astype(img.dtype), params.gf_radius, params.gf_eps)
    t_refined = np.clip(t_refined, params.t0, 1.0)
    radiance = recover_radiance(img, t_refined, airlight, params.t0)
    return radiance, t_refined, airlight
