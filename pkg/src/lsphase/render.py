"""Figures: detection overlays and error distributions (matplotlib, Agg backend)."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps reruns byte-identical
_PNG_META = {"Software": None}

TRUTH_COLOR = "cyan"
DETECT_COLOR = "yellow"


def _to_pixel(rec, width, height):
    return float(rec["x"]) + (width - 1) / 2.0, float(rec["y"]) + (height - 1) / 2.0


def overlay_figure(image: np.ndarray, truth=(), detections=(), path=None, title: str | None = None, dpi: int = 100):
    """Image with ground truth (cyan circles of radius T/2, dashed direction)
    and detections (yellow direction vectors of length T)."""
    h, w = image.shape
    fig, ax = plt.subplots(figsize=(w / dpi, h / dpi), dpi=dpi)
    ax.imshow(image, cmap="gray", interpolation="nearest")
    for rec in truth:
        x, y = _to_pixel(rec, w, h)
        T = float(rec["period_px"])
        a = float(rec["direction_rad"])
        ax.add_patch(plt.Circle((x, y), T / 2, fill=False, color=TRUTH_COLOR, lw=0.8))
        ax.plot([x, x + T * math.cos(a)], [y, y + T * math.sin(a)], ls="--", color=TRUTH_COLOR, lw=0.8)
    for rec in detections:
        x, y = _to_pixel(rec, w, h)
        T = float(rec["period_px"])
        a = float(rec["direction_rad"])
        ax.annotate(
            "", xy=(x + T * math.cos(a), y + T * math.sin(a)), xytext=(x, y),
            arrowprops=dict(arrowstyle="->", color=DETECT_COLOR, lw=1.0),
        )
        ax.plot([x], [y], marker="o", ms=2, color=DETECT_COLOR)
    ax.set_xlim(-0.5, w - 0.5)
    ax.set_ylim(h - 0.5, -0.5)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.subplots_adjust(0, 0, 1, 1 if not title else 0.95)
    if path is not None:
        fig.savefig(path, dpi=dpi, metadata=_PNG_META)
        plt.close(fig)
    return fig


def error_figure(report, path=None):
    """Histograms of location, direction and period errors of matched minutiae."""
    fig, axes = plt.subplots(1, 3, figsize=(10, 3), dpi=100)
    series = [
        (report.loc, "|dr| / T"),
        (report.dir, "|d theta| (rad)"),
        (report.period_signed, "dT / T"),
    ]
    for ax, (values, label) in zip(axes, series):
        if values:
            ax.hist(values, bins=20, color="tab:blue")
        ax.set_xlabel(label)
        ax.set_ylabel("count")
    fig.suptitle(f"FR {report.fr:.3f}  FA {report.fa:.3f}  matched {len(report.pairs)}")
    fig.tight_layout()
    if path is not None:
        fig.savefig(path, metadata=_PNG_META)
        plt.close(fig)
    return fig
