"""Report rendering: delimited per-frame table plus matplotlib figures.

The report directory receives report.csv and, next to it, figures for the
rate allocation across frames and layers and the per-frame quality curve.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .pipeline import FrameReport, MetricsSummary  # noqa: E402

_LAYER_COLORS = ["#2b2d42", "#1f77b4", "#2ca02c", "#ff7f0e", "#d62728", "#9467bd", "#8c564b"]


def write_report(outdir: str, summary: MetricsSummary,
                 reports: list[FrameReport] | None = None) -> list[str]:
    """Write report.csv and figures into outdir; returns the created paths."""
    os.makedirs(outdir, exist_ok=True)
    created = []

    csv_path = os.path.join(outdir, "report.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "kind", "layer", "bits_motion", "bits_latent", "bits_total", "psnr"])
        for t, p in enumerate(summary.frame_psnr):
            if reports:
                r = reports[t]
                writer.writerow([t, r.kind, r.layer, r.bits_motion, r.bits_latent,
                                 r.bits_total, f"{p:.4f}"])
            else:
                writer.writerow([t, "", "", "", "", "", f"{p:.4f}"])
    created.append(csv_path)

    created.append(_psnr_figure(outdir, summary))
    if reports:
        created.append(_rate_figure(outdir, reports))
        created.append(_layer_figure(outdir, summary))
    return created


def _psnr_figure(outdir: str, summary: MetricsSummary) -> str:
    path = os.path.join(outdir, "psnr_per_frame.png")
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(range(len(summary.frame_psnr)), summary.frame_psnr, marker="o", ms=3, lw=1)
    ax.set_xlabel("frame")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(f"reconstruction quality (mean {summary.mean_psnr:.2f} dB)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _rate_figure(outdir: str, reports: list[FrameReport]) -> str:
    path = os.path.join(outdir, "bits_per_frame.png")
    ts = [r.t for r in reports]
    motion = [r.bits_motion for r in reports]
    latent = [r.bits_latent for r in reports]
    colors = [_LAYER_COLORS[min(r.layer, len(_LAYER_COLORS) - 1)] for r in reports]
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.bar(ts, latent, color=colors, label="latent")
    ax.bar(ts, motion, bottom=latent, color=colors, alpha=0.45, label="motion")
    ax.set_xlabel("frame (bar color = hierarchy layer)")
    ax.set_ylabel("bits")
    ax.set_title("rate allocation per frame")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _layer_figure(outdir: str, summary: MetricsSummary) -> str:
    path = os.path.join(outdir, "bits_by_layer.png")
    layers = sorted(summary.layer_bits)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar([str(k) for k in layers], [summary.layer_bits[k] for k in layers],
           color=[_LAYER_COLORS[min(k, len(_LAYER_COLORS) - 1)] for k in layers])
    ax.set_xlabel("hierarchy layer (0 = intra)")
    ax.set_ylabel("mean bits per frame")
    ax.set_title("rate allocation by layer")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
