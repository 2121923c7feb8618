"""Classical segmentation baselines: Otsu thresholding and a Canny-edge
region extractor.

Otsu maximizes the between-class variance w0*w1*(mu0-mu1)^2 over the 256
quantized intensity levels, scanning incrementally; ties resolve to the
smallest threshold and the target mask is everything above it.

Canny yields edges, not regions, so the baseline closes them into a mask:
Gaussian blur -> Sobel gradients -> non-maximum suppression -> hysteresis
with thresholds given as quantiles of the gradient magnitude -> 3x3
morphological closing (2 iterations) -> hole filling. The quantile choice
makes the mask invariant under positive rescaling of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import Dataset
from .metrics import pixel_confusion_counts


def quantize256(image: np.ndarray) -> np.ndarray:
    """Map [0, 1] reals to the 256 intensity bins: floor(255*v + 0.5)."""
    v = np.asarray(image, dtype=float)
    return np.clip(np.floor(255.0 * v + 0.5), 0, 255).astype(np.uint8)


def histogram256(image: np.ndarray) -> np.ndarray:
    return np.bincount(quantize256(image).ravel(), minlength=256)


def between_class_variance(hist: np.ndarray) -> np.ndarray:
    """sigma_b^2(t) for every threshold t, with class 0 = levels <= t.

    Computed from cumulative sums in one pass; thresholds that leave
    either class empty score zero.
    """
    hist = np.asarray(hist, dtype=float)
    total = hist.sum()
    levels = np.arange(256, dtype=float)
    w0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    w1 = total - w0
    mean_all = s0[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = s0 / w0
        mu1 = (mean_all - s0) / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
    var[(w0 == 0) | (w1 == 0)] = 0.0
    return var / (total * total) if total else var


def otsu_threshold(image: np.ndarray):
    """(threshold bin, target mask). The mask marks pixels whose quantized
    intensity exceeds the threshold; a constant image returns (0, empty)."""
    q = quantize256(image)
    hist = np.bincount(q.ravel(), minlength=256)
    if np.count_nonzero(hist) < 2:
        return 0, np.zeros(q.shape, dtype=bool)
    var = between_class_variance(hist)
    t = int(np.argmax(var))   # argmax takes the first/smallest maximizer
    return t, q > t


def _sobel_gradients(img: np.ndarray):
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    return gx, gy


def _non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray):
    """Keep pixels that are local maxima along the gradient direction,
    quantized to the 4 principal orientations."""
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    pad = np.pad(mag, 1, mode="constant")
    c = pad[1:-1, 1:-1]
    east = (pad[1:-1, 2:], pad[1:-1, :-2])        # 0 deg
    ne = (pad[:-2, 2:], pad[2:, :-2])             # 45 deg
    north = (pad[:-2, 1:-1], pad[2:, 1:-1])       # 90 deg
    nw = (pad[:-2, :-2], pad[2:, 2:])             # 135 deg
    sector = np.zeros(mag.shape, dtype=np.uint8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3
    keep = np.zeros(mag.shape, dtype=bool)
    for s, (a, b) in enumerate((east, ne, north, nw)):
        sel = sector == s
        # strict on one side thins the double-wide ridge a symmetric peak
        # would otherwise produce
        keep |= sel & (c > a) & (c >= b)
    return np.where(keep, mag, 0.0)


def _hysteresis(nms: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = nms >= low
    strong = nms >= high
    if not strong.any():
        return np.zeros(nms.shape, dtype=bool)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def canny_segment(image: np.ndarray, sigma: float = 1.4,
                  low: float = 0.7, high: float = 0.9) -> np.ndarray:
    """Edge-based target mask. `low` and `high` are quantiles in (0, 1) of
    the nonzero gradient magnitude used for hysteresis."""
    if not (0.0 < low < high < 1.0):
        raise ValueError(f"need 0 < low < high < 1, got low={low} high={high}")
    img = np.asarray(image, dtype=float)
    blurred = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gx, gy = _sobel_gradients(blurred)
    mag = np.hypot(gx, gy)
    if mag.max() == 0.0:
        return np.zeros(img.shape, dtype=bool)
    nms = _non_maximum_suppression(mag, gx, gy)
    if not (nms > 0).any():
        return np.zeros(img.shape, dtype=bool)
    # quantiles over the whole magnitude map: on clean images most of it is
    # zero, the low threshold collapses, and the full contour survives
    t_low, t_high = np.quantile(mag, [low, high])
    edges = _hysteresis(np.where(nms > 0, nms, -1.0), max(t_low, 0.0), t_high)
    closed = ndimage.binary_closing(edges, structure=np.ones((3, 3), dtype=bool),
                                    iterations=2)
    return ndimage.binary_fill_holes(closed)


@dataclass
class BaselineReport:
    method: str
    rows: list                      # (scope, target_acc, background_acc, overall)
    degenerate_samples: int = 0     # constant chips where Otsu returned empty

    def overall(self) -> tuple:
        return next(r[1:] for r in self.rows if r[0] == "overall")


_METHODS = {
    "otsu": lambda img: otsu_threshold(img)[1],
    "canny": canny_segment,
    "groundtruth": None,   # filled per sample below
}


def evaluate_baseline(method, dataset: Dataset, **kwargs) -> BaselineReport:
    """Per-class and overall target/background pixel accuracies of a
    classical segmenter over a dataset.

    `method` is 'otsu', 'canny', 'groundtruth' (oracle passthrough), or a
    callable mapping a (h, w) image to a boolean mask.
    """
    if not dataset.samples:
        raise ValueError("empty dataset")
    if callable(method):
        name, fn = getattr(method, "__name__", "custom"), method
    elif method in _METHODS:
        name = method
        fn = _METHODS[method]
        if fn is not None and kwargs:
            base = fn
            fn = lambda img: base(img, **kwargs)
    else:
        raise ValueError(f"unknown baseline method {method!r}; "
                         f"expected one of {sorted(_METHODS)}")
    per_class: dict = {}
    degenerate = 0
    for s in dataset.samples:
        img = s.image[0, 0]
        pred = s.mask.astype(bool) if name == "groundtruth" else np.asarray(fn(img), dtype=bool)
        if name == "otsu" and not pred.any():
            degenerate += 1
        counts = pixel_confusion_counts(pred.astype(np.int64), s.mask.astype(np.int64), 2)
        per_class[s.label] = per_class.get(s.label, 0) + counts

    def accs(counts):
        bg_total, tg_total = counts[0].sum(), counts[1].sum()
        tg = counts[1, 1] / tg_total if tg_total else 0.0
        bg = counts[0, 0] / bg_total if bg_total else 0.0
        overall = np.trace(counts) / counts.sum()
        return float(tg), float(bg), float(overall)

    rows = []
    total = np.zeros((2, 2), dtype=np.int64)
    for label in sorted(per_class):
        total += per_class[label]
        rows.append((dataset.class_names[label], *accs(per_class[label])))
    rows.append(("overall", *accs(total)))
    return BaselineReport(method=name, rows=rows, degenerate_samples=degenerate)
