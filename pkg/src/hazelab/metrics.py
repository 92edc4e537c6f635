"""PSNR and SSIM image quality metrics plus directory-level evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1 / MSE) over all pixels and channels, peak 1.0.

    Identical images return math.inf.
    """
    if a.shape != b.shape:
        raise ValueError(f"psnr extent mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean(np.square(a.astype(np.float64) - b.astype(np.float64))))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_single(a: np.ndarray, b: np.ndarray, window: np.ndarray, c1: float, c2: float) -> float:
    # Gaussian-weighted local statistics over valid (fully interior) windows
    k = window.shape[0]
    wa = sliding_window_view(a, (k, k))
    wb = sliding_window_view(b, (k, k))
    mu_a = np.tensordot(wa, window, axes=([2, 3], [0, 1]))
    mu_b = np.tensordot(wb, window, axes=([2, 3], [0, 1]))
    e_aa = np.tensordot(wa * wa, window, axes=([2, 3], [0, 1]))
    e_bb = np.tensordot(wb * wb, window, axes=([2, 3], [0, 1]))
    e_ab = np.tensordot(wa * wb, window, axes=([2, 3], [0, 1]))
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5) on the
    [0, 1] range, computed per channel over valid positions and averaged."""
    if a.shape != b.shape:
        raise ValueError(f"ssim extent mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(
            f"ssim requires min dimension >= {SSIM_WINDOW}, got {a.shape[0]}x{a.shape[1]}"
        )
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    if a.ndim == 2:
        return _ssim_single(a64, b64, window, c1, c2)
    vals = [_ssim_single(a64[..., c], b64[..., c], window, c1, c2) for c in range(a.shape[2])]
    return float(np.mean(vals))


@dataclass
class MetricReport:
    rows: list[tuple[str, float, float]] = field(default_factory=list)  # (name, psnr, ssim)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (name, reason)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r[1] for r in self.rows])) if self.rows else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r[2] for r in self.rows])) if self.rows else math.nan


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf"
    return f"{v:.6f}"


def report_to_csv(report: MetricReport) -> str:
    lines = ["name,psnr_db,ssim"]
    for name, p, s in report.rows:
        lines.append(f"{name},{_fmt(p)},{_fmt(s)}")
    if report.rows:
        lines.append(f"mean,{_fmt(report.mean_psnr)},{_fmt(report.mean_ssim)}")
    for name, reason in report.skipped:
        lines.append(f"# skipped: {name} ({reason})")
    return "\n".join(lines) + "\n"


def evaluate_dirs(pred_dir: str | Path, gt_dir: str | Path) -> MetricReport:
    """Pair same-named images across two directories and score each pair.

    Rows are sorted by filename; unpaired files land in the skipped section.
    """
    from .imgio import load_image

    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    pred_files = {p.name: p for p in pred_dir.iterdir() if p.suffix.lower() == ".png"}
    gt_files = {p.name: p for p in gt_dir.iterdir() if p.suffix.lower() == ".png"}
    report = MetricReport()
    for name in sorted(set(pred_files) | set(gt_files)):
        if name not in pred_files:
            report.skipped.append((name, "missing prediction"))
            continue
        if name not in gt_files:
            report.skipped.append((name, "missing ground truth"))
            continue
        a = load_image(pred_files[name])
        b = load_image(gt_files[name])
        if a.shape != b.shape:
            report.skipped.append((name, f"shape mismatch {a.shape} vs {b.shape}"))
            continue
        report.rows.append((name, psnr(a, b), ssim(a, b)))
    return report
