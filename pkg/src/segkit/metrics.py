"""Pixel accuracy, binary IoU, and aggregated evaluation reports.

Accuracy alone is blind to class imbalance: a predictor that only emits
background scores the background fraction. Binary IoU (background vs any
foreground) is the companion metric that exposes such collapse.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, MaskShapeError, PairingError
from .rle import NUM_CLASSES


def pixel_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    """Fraction of pixels where the predicted label equals the target."""
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise MaskShapeError(f"prediction {p.shape} vs ground truth {g.shape}")
    return float(np.count_nonzero(p == g) / p.size)


def binary_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of the non-background regions.

    Any label != 0 counts as foreground regardless of which class it is,
    so relabeling foreground classes never changes the score. When both
    foregrounds are empty the maps agree that nothing is there: 1.0.
    """
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise MaskShapeError(f"prediction {p.shape} vs ground truth {g.shape}")
    pred_fg = p != 0
    gt_fg = g != 0
    union = np.count_nonzero(pred_fg | gt_fg)
    if union == 0:
        return 1.0
    inter = np.count_nonzero(pred_fg & gt_fg)
    return float(inter / union)


@dataclass
class MetricsReport:
    """Aggregate scores for a set of (prediction, ground truth) pairs.

    Accuracy is pixel-pooled across all images; binary IoU is averaged
    per image. Per-class IoU over pooled pixels is supplementary output
    for studying which classes (typically small objects) are lost.
    """

    pixel_accuracy: float
    binary_iou: float
    per_class_iou: dict[int, float]
    n_images: int
    per_class_pixels: dict[int, int] = field(default_factory=dict)
    config_fingerprint: str = ""

    def to_json(self) -> str:
        payload = {
            "pixel_accuracy": self.pixel_accuracy,
            "binary_iou": self.binary_iou,
            "per_class_iou": {str(k): v for k, v in sorted(self.per_class_iou.items())},
            "n_images": self.n_images,
            "per_class_pixels": {str(k): v for k, v in sorted(self.per_class_pixels.items())},
            "config_fingerprint": self.config_fingerprint,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["pixel_accuracy", repr(self.pixel_accuracy)])
            writer.writerow(["binary_iou", repr(self.binary_iou)])
            writer.writerow(["n_images", self.n_images])
            for cls, iou in sorted(self.per_class_iou.items()):
                writer.writerow([f"class_{cls}_iou", repr(iou)])


def evaluate_pair_set(
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    config_fingerprint: str = "",
) -> MetricsReport:
    """Score matched prediction/ground-truth class maps.

    Raises:
        PairingError: sequence lengths differ.
        EmptyInputError: no pairs at all.
        MaskShapeError: a pair's shapes disagree.
    """
    if len(preds) != len(gts):
        raise PairingError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise EmptyInputError("no prediction pairs to evaluate")

    total_pixels = 0
    total_correct = 0
    iou_sum = 0.0
    inter = np.zeros(NUM_CLASSES, dtype=np.int64)
    union = np.zeros(NUM_CLASSES, dtype=np.int64)
    gt_pixels = np.zeros(NUM_CLASSES, dtype=np.int64)

    for pred, gt in zip(preds, gts):
        p = np.asarray(pred)
        g = np.asarray(gt)
        if p.shape != g.shape:
            raise MaskShapeError(f"prediction {p.shape} vs ground truth {g.shape}")
        total_pixels += p.size
        total_correct += int(np.count_nonzero(p == g))
        iou_sum += binary_iou(p, g)
        for cls in np.union1d(np.unique(p), np.unique(g)):
            pc = p == cls
            gc = g == cls
            inter[cls] += int(np.count_nonzero(pc & gc))
            union[cls] += int(np.count_nonzero(pc | gc))
        for cls, count in zip(*np.unique(g, return_counts=True)):
            gt_pixels[cls] += int(count)

    per_class_iou = {
        int(cls): float(inter[cls] / union[cls])
        for cls in range(NUM_CLASSES)
        if union[cls] > 0
    }
    per_class_pixels = {
        int(cls): int(gt_pixels[cls]) for cls in range(NUM_CLASSES) if gt_pixels[cls] > 0
    }
    return MetricsReport(
        pixel_accuracy=float(total_correct / total_pixels),
        binary_iou=float(iou_sum / len(preds)),
        per_class_iou=per_class_iou,
        n_images=len(preds),
        per_class_pixels=per_class_pixels,
        config_fingerprint=config_fingerprint,
    )
