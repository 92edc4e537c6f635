"""Figure rendering for evaluation reports and training logs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricReport


def save_eval_figure(report: MetricReport, path: str | Path) -> None:
    """Per-image PSNR/SSIM bars with mean lines, next to the CSV report."""
    names = [r[0] for r in report.rows]
    psnrs = [r[1] for r in report.rows]
    ssims = [r[2] for r in report.rows]
    # a finite stand-in keeps the bar chart drawable when pairs are identical
    cap = max([p for p in psnrs if np.isfinite(p)], default=50.0) + 10.0
    shown = [min(p, cap) for p in psnrs]

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(max(6.0, 0.5 * len(names) + 2), 6.4), sharex=True)
    x = np.arange(len(names))
    ax1.bar(x, shown, color="#4878d0")
    if np.isfinite(report.mean_psnr):
        ax1.axhline(min(report.mean_psnr, cap), color="#d65f5f", ls="--", lw=1,
                    label=f"mean {report.mean_psnr:.2f} dB")
        ax1.legend(loc="lower right", fontsize=8)
    ax1.set_ylabel("PSNR (dB)")
    ax2.bar(x, ssims, color="#6acc65")
    if np.isfinite(report.mean_ssim):
        ax2.axhline(report.mean_ssim, color="#d65f5f", ls="--", lw=1,
                    label=f"mean {report.mean_ssim:.4f}")
        ax2.legend(loc="lower right", fontsize=8)
    ax2.set_ylabel("SSIM")
    ax2.set_ylim(0.0, 1.05)
    ax2.set_xticks(x)
    ax2.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_curves(rows: list[dict], path: str | Path) -> None:
    """Loss and learning-rate curves over epochs, next to the tsv log."""
    epochs = [r["epoch"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7.0, 6.4), sharex=True)
    for key, color in (("l_mse", "#4878d0"), ("l_per", "#6acc65"), ("l_adv", "#d65f5f"),
                       ("l_D", "#b47cc7")):
        ax1.plot(epochs, [r[key] for r in rows], color=color, lw=1.2, label=key)
    ax1.set_ylabel("loss component")
    ax1.legend(fontsize=8)
    ax2.plot(epochs, [r["l_I"] for r in rows], color="#222222", lw=1.2, label="l_I")
    ax2.set_ylabel("generator objective")
    ax2.set_xlabel("epoch")
    ax2r = ax2.twinx()
    ax2r.plot(epochs, [r["lr"] for r in rows], color="#888888", lw=1.0, ls=":", label="lr")
    ax2r.set_ylabel("learning rate")
    ax2.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
