"""Recognition and segmentation scoring: confusion matrices, recognition
ratio, and per-pixel accuracy matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def recognition_ratio(self) -> float:
        t = self.total
        return float(np.trace(self.counts)) / t if t else 0.0

    def per_class_ratio(self) -> np.ndarray:
        row = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.diag(self.counts) / row
        return np.where(row > 0, r, 0.0)

    def row_percent(self) -> np.ndarray:
        """Row-normalized percentages; rows with no samples stay zero."""
        row = self.counts.sum(axis=1, keepdims=True).astype(float)
        out = np.zeros_like(self.counts, dtype=float)
        nz = row[:, 0] > 0
        out[nz] = 100.0 * self.counts[nz] / row[nz]
        return out


def confusion(true_labels, predicted_labels, num_classes: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"label arrays differ in length: {t.shape} vs {p.shape}")
    if t.size and (t.min() < 0 or t.max() >= num_classes
                   or p.min() < 0 or p.max() >= num_classes):
        raise ValueError(f"labels out of range [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass
class PixelAccuracyMatrix:
    """Pixel-level confusion with rows = true segmentation class."""
    counts: np.ndarray

    @property
    def overall(self) -> float:
        t = int(self.counts.sum())
        return float(np.trace(self.counts)) / t if t else 0.0

    def row_percent(self) -> np.ndarray:
        row = self.counts.sum(axis=1, keepdims=True).astype(float)
        out = np.zeros_like(self.counts, dtype=float)
        nz = row[:, 0] > 0
        out[nz] = 100.0 * self.counts[nz] / row[nz]
        return out


def pixel_confusion_counts(pred_mask, true_mask, num_classes: int) -> np.ndarray:
    p = np.asarray(pred_mask, dtype=np.int64).ravel()
    t = np.asarray(true_mask, dtype=np.int64).ravel()
    if p.shape != t.shape:
        raise ValueError("pred and true masks differ in shape")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return counts


def pixel_accuracy(pred_mask, true_mask, num_classes: int | None = None):
    """(overall accuracy, PixelAccuracyMatrix) for one mask or a batch."""
    p = np.asarray(pred_mask)
    t = np.asarray(true_mask)
    if p.shape != t.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {t.shape}")
    if num_classes is None:
        num_classes = int(max(p.max(initial=0), t.max(initial=0))) + 1
        num_classes = max(num_classes, 2)
    mat = PixelAccuracyMatrix(pixel_confusion_counts(p, t, num_classes))
    return mat.overall, mat


@dataclass
class EvalReport:
    scenario: str
    class_names: list
    confusion: ConfusionMatrix
    pixels: PixelAccuracyMatrix
    seg_class_names: list = field(default_factory=lambda: ["background", "target"])
    overlays: list = field(default_factory=list)   # (image, true_mask, pred_mask)

    @property
    def recognition_ratio(self) -> float:
        return self.confusion.recognition_ratio()

    @property
    def pixel_accuracy(self) -> float:
        return self.pixels.overall
