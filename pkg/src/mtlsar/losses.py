"""Recognition, segmentation, and joint losses with fused softmax
cross-entropy gradients.

Both losses are means over the mini-batch, and the segmentation loss is
additionally a mean over the pixels of a chip, so batch size and image
size do not change the scale the optimizer sees. All returned gradients
are taken with respect to pre-softmax logits and already include those
normalizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import softmax
from .tensor import DTYPE

LOG_FLOOR = 1e-12  # keeps confidently wrong predictions finite


@dataclass
class LossValue:
    """Joint loss bookkeeping: total = lambda_rec*rec + lambda_seg*seg."""
    rec: float
    seg: float
    lambda_rec: float = 1.0
    lambda_seg: float = 1.0

    @property
    def total(self) -> float:
        return self.lambda_rec * self.rec + self.lambda_seg * self.seg


def _as_label_indices(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:   # one-hot rows
        if labels.shape[1] != num_classes:
            raise ValueError(f"one-hot width {labels.shape[1]} != {num_classes}")
        return labels.argmax(axis=1)
    idx = labels.astype(np.int64)
    if idx.min() < 0 or idx.max() >= num_classes:
        raise ValueError(f"label index out of range [0, {num_classes})")
    return idx


def recognition_loss(probs: np.ndarray, labels):
    """Mean cross-entropy of class probabilities against true labels.

    Returns (loss, d_logits) where d_logits = (p - y)/batch is the fused
    softmax cross-entropy gradient with respect to the logits that
    produced `probs`.
    """
    probs = np.asarray(probs, dtype=DTYPE)
    if probs.ndim != 2:
        raise ValueError(f"expected (batch, c) probabilities, got {probs.shape}")
    batch, c = probs.shape
    idx = _as_label_indices(labels, c)
    if idx.shape != (batch,):
        raise ValueError(f"got {idx.shape[0]} labels for batch of {batch}")
    p_true = probs[np.arange(batch), idx]
    loss = float(-np.mean(np.log(np.maximum(p_true, LOG_FLOOR))))
    d_logits = probs.copy()
    d_logits[np.arange(batch), idx] -= 1.0
    d_logits /= batch
    return loss, d_logits


def segmentation_loss(seg_logits: np.ndarray, masks: np.ndarray):
    """Per-pixel softmax cross-entropy, averaged over the h*w pixels of
    each chip and then over the batch.

    masks: (batch, h, w) integer class indices in [0, v). Returns
    (loss, d_logits) with d_logits = (p - onehot)/(n_pixels * batch).
    """
    seg_logits = np.asarray(seg_logits, dtype=DTYPE)
    if seg_logits.ndim != 4:
        raise ValueError(f"expected (batch, v, h, w) logits, got {seg_logits.shape}")
    batch, v, h, w = seg_logits.shape
    masks = np.asarray(masks)
    if masks.shape != (batch, h, w):
        raise ValueError(f"mask shape {masks.shape} != {(batch, h, w)}")
    m = masks.astype(np.int64)
    if m.min() < 0 or m.max() >= v:
        raise ValueError(f"mask value out of range [0, {v})")

    # stable per-pixel softmax over the class axis
    z = seg_logits - seg_logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    bi = np.arange(batch)[:, None, None]
    yi = np.arange(h)[None, :, None]
    xi = np.arange(w)[None, None, :]
    p_true = p[bi, m, yi, xi]
    n_pix = h * w
    loss = float(np.mean(-np.log(np.maximum(p_true, LOG_FLOOR)).sum(axis=(1, 2)) / n_pix))

    d_logits = p
    d_logits[bi, m, yi, xi] -= 1.0
    d_logits /= n_pix * batch
    return loss, d_logits


def joint_loss(rec: float, seg: float, lambda_rec: float = 1.0,
               lambda_seg: float = 1.0) -> float:
    """Weighted sum of the two task losses; (1, 1) is the plain sum."""
    if lambda_rec < 0 or lambda_seg < 0:
        raise ValueError("loss weights must be >= 0")
    return lambda_rec * rec + lambda_seg * seg


def predict_classes(probs: np.ndarray) -> np.ndarray:
    return np.asarray(probs).argmax(axis=1)


def predict_masks(seg_logits: np.ndarray) -> np.ndarray:
    return np.asarray(seg_logits).argmax(axis=1)


__all__ = [
    "LossValue", "recognition_loss", "segmentation_loss", "joint_loss",
    "predict_classes", "predict_masks", "softmax",
]
