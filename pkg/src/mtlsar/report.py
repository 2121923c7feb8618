"""Evaluation artifacts: CSV tables, a JSON summary, and per-sample
overlay images.

Machine-readable CSVs carry percentages at full precision so parsed rows
sum to 100 within float error; the human-readable `tables.txt` rounds to
two decimals like the usual published tables.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .metrics import ConfusionMatrix, EvalReport, PixelAccuracyMatrix


def _pct(x: float) -> str:
    return f"{x:.10f}"


def write_confusion_csv(path, cm: ConfusionMatrix, class_names):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["# recognition_ratio", _pct(100.0 * cm.recognition_ratio())])
        wr.writerow(["# section", "counts"])
        wr.writerow(["true\\pred", *class_names])
        for name, row in zip(class_names, cm.counts):
            wr.writerow([name, *row.tolist()])
        wr.writerow(["# section", "row_percent"])
        wr.writerow(["true\\pred", *class_names])
        for name, row in zip(class_names, cm.row_percent()):
            wr.writerow([name, *(_pct(v) for v in row)])


def write_pixel_csv(path, pam: PixelAccuracyMatrix, seg_class_names):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["# pixel_accuracy", _pct(100.0 * pam.overall)])
        wr.writerow(["# section", "counts"])
        wr.writerow(["true\\pred", *seg_class_names])
        for name, row in zip(seg_class_names, pam.counts):
            wr.writerow([name, *row.tolist()])
        wr.writerow(["# section", "row_percent"])
        wr.writerow(["true\\pred", *seg_class_names])
        for name, row in zip(seg_class_names, pam.row_percent()):
            wr.writerow([name, *(_pct(v) for v in row)])


def write_baseline_csv(path, rows):
    """rows: (scope, target_acc, background_acc, overall_acc) fractions."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scope", "pixel_accuracy_target", "pixel_accuracy_background",
                     "pixel_accuracy"])
        for scope, t, b, o in rows:
            wr.writerow([scope, _pct(100.0 * t), _pct(100.0 * b), _pct(100.0 * o)])


def _pretty_matrix(title, names, percent) -> str:
    width = max(10, max(len(n) for n in names) + 2)
    lines = [title, " " * width + "".join(f"{n:>{width}}" for n in names)]
    for name, row in zip(names, percent):
        lines.append(f"{name:>{width}}" + "".join(f"{v:>{width}.2f}" for v in row))
    return "\n".join(lines) + "\n"


def write_pretty_tables(path, report: EvalReport):
    text = _pretty_matrix(
        f"recognition confusion (%), ratio {100.0 * report.recognition_ratio:.2f}%",
        report.class_names, report.confusion.row_percent())
    text += "\n"
    text += _pretty_matrix(
        f"pixel accuracy (%), overall {100.0 * report.pixel_accuracy:.2f}%",
        report.seg_class_names, report.pixels.row_percent())
    Path(path).write_text(text)


def stretch_contrast(image: np.ndarray) -> np.ndarray:
    """Percentile stretch of a [0, 1] image to 8-bit for display."""
    lo, hi = np.percentile(image, (2.0, 98.0))
    if hi <= lo:
        return np.zeros(image.shape, dtype=np.uint8)
    return (255.0 * np.clip((image - lo) / (hi - lo), 0.0, 1.0)).astype(np.uint8)


def _outline(mask: np.ndarray) -> np.ndarray:
    m = mask.astype(bool)
    return m & ~ndimage.binary_erosion(m)


def overlay_image(image: np.ndarray, true_mask: np.ndarray,
                  pred_mask: np.ndarray) -> np.ndarray:
    """RGB panel: stretched input with the ground-truth outline in green
    and the predicted outline in red (overlap shows yellow)."""
    base = stretch_contrast(image)
    rgb = np.stack([base, base, base], axis=-1)
    gt = _outline(true_mask)
    pr = _outline(pred_mask)
    rgb[gt] = [0, 255, 0]
    rgb[pr, 0] = 255
    rgb[pr & gt] = [255, 255, 0]
    return rgb


def emit_report(report: EvalReport, out_dir, max_overlays: int = 16) -> dict:
    """Write confusion.csv, pixel_accuracy.csv, summary.json, tables.txt,
    and overlay PNGs; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_confusion_csv(out / "confusion.csv", report.confusion, report.class_names)
    write_pixel_csv(out / "pixel_accuracy.csv", report.pixels, report.seg_class_names)
    write_pretty_tables(out / "tables.txt", report)
    overlay_dir = out / "overlays"
    n_overlays = min(max_overlays, len(report.overlays))
    if n_overlays:
        overlay_dir.mkdir(exist_ok=True)
        for i in range(n_overlays):
            image, true_mask, pred_mask = report.overlays[i]
            rgb = overlay_image(image, true_mask, pred_mask)
            Image.fromarray(rgb).save(overlay_dir / f"{i:04d}.png")
    summary = {
        "scenario": report.scenario,
        "class_names": report.class_names,
        "recognition_ratio": report.recognition_ratio,
        "per_class_ratio": report.confusion.per_class_ratio().tolist(),
        "pixel_accuracy": report.pixel_accuracy,
        "num_test_samples": report.confusion.total,
        "num_overlays": n_overlays,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
