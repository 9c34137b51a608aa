"""Static matplotlib renderings of run logs and dataset statistics.

All writers are headless (Agg) and pin the PNG metadata so repeated runs
with identical inputs produce identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .data import ClassHistogram, SizeStats  # noqa: E402

_PNG_METADATA = {"Software": "segkit"}


def _save(fig, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)
    return out_path


def plot_curves(records: Sequence[dict], out_path: str | Path) -> Path:
    """Loss and metric curves from run-log records (one dict per epoch)."""
    epochs = [r["epoch"] for r in records]
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(11, 4.2))
    ax_loss.plot(epochs, [r["train_loss"] for r in records], color="tab:red")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss")
    ax_loss.set_title("Loss")
    ax_loss.grid(alpha=0.3)

    ax_metric.plot(epochs, [r["train_acc"] for r in records],
                   label="train accuracy", color="tab:blue")
    ax_metric.plot(epochs, [r["val_acc"] for r in records],
                   label="val accuracy", color="tab:blue", linestyle="--")
    ax_metric.plot(epochs, [r["train_biou"] for r in records],
                   label="train binary IoU", color="tab:green")
    ax_metric.plot(epochs, [r["val_biou"] for r in records],
                   label="val binary IoU", color="tab:green", linestyle="--")
    ax_metric.set_xlabel("epoch")
    ax_metric.set_ylim(-0.02, 1.02)
    ax_metric.set_title("Accuracy and binary IoU")
    ax_metric.legend(loc="lower right", fontsize=8)
    ax_metric.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_class_histogram(hist: ClassHistogram, out_path: str | Path) -> Path:
    """Bar chart of the share of images containing each class."""
    classes = sorted(hist.image_shares)
    shares = [hist.image_shares[c] for c in classes]
    fig, ax = plt.subplots(figsize=(10, 4.2))
    ax.bar([str(c) for c in classes], shares, color="tab:purple")
    ax.set_xlabel("class id")
    ax.set_ylabel("share of images")
    ax.set_title(f"Class occurrence over {hist.n_images} images")
    if len(classes) > 20:
        ax.tick_params(axis="x", labelsize=6, rotation=90)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_size_histogram(stats: SizeStats, out_path: str | Path) -> Path:
    """Width and height distributions with their extremes annotated."""
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.2))
    for ax, counts, label, lo, hi in (
        (axes[0], stats.width_counts, "width", stats.width_min, stats.width_max),
        (axes[1], stats.height_counts, "height", stats.height_min, stats.height_max),
    ):
        values = sorted(counts)
        ax.bar(values, [counts[v] for v in values],
               width=max(1, (hi - lo) / 60 or 1), color="tab:cyan")
        ax.set_xlabel(f"{label} (px)")
        ax.set_ylabel("images")
        ax.set_title(f"{label}: min {lo}, max {hi}, max diff {hi - lo}")
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)
