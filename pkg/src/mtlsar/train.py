"""SGD with step-decay learning rate, the per-epoch training loop, and the
epoch log writer.

The learning rate follows lr(epoch) = lr0 * decay^floor(epoch / period);
with the defaults (lr0 1e-3, decay 0.1, period 5) epochs 0-4 train at
1e-3, epochs 5-9 at 1e-4, and so on.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import losses
from .network import MtlNetwork
from .tensor import Rng


@dataclass
class SgdState:
    lr0: float = 0.001
    decay: float = 0.1
    period: int = 5
    epoch: int = 0

    def __post_init__(self):
        if self.lr0 <= 0 or self.decay <= 0 or self.period < 1 or self.epoch < 0:
            raise ValueError("need lr0 > 0, decay > 0, period >= 1, epoch >= 0")

    @property
    def lr(self) -> float:
        return self.lr0 * self.decay ** (self.epoch // self.period)


def sgd_step(params: list, grads: list, state: SgdState):
    """In-place w <- w - lr * grad over parallel parameter/gradient lists.

    Gradients are expected to already be batch means (the losses put the
    1/batch factor into their deltas)."""
    lr = state.lr
    for p, g in zip(params, grads, strict=True):
        if p.shape != g.shape:
            raise ValueError(f"param/grad shape mismatch {p.shape} vs {g.shape}")
        p -= lr * g


@dataclass
class EpochSummary:
    epoch: int
    lr: float
    loss: float
    rec_loss: float
    seg_loss: float
    train_acc: float
    seconds: float


def train_epoch(net: MtlNetwork, images: np.ndarray, labels: np.ndarray,
                masks: np.ndarray, state: SgdState, rng: Rng,
                batch_size: int | None = None) -> EpochSummary:
    """One shuffled pass of forward/backward/step over the training set.

    images: (n, 1, h, w); labels: (n,); masks: (n, h, w). The shuffle is
    drawn from `rng`, so a fixed seed reproduces the epoch bit for bit.
    Returns the per-sample mean losses and training accuracy, then
    advances the epoch counter.
    """
    n = images.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    cfg = net.config
    bs = batch_size or cfg.batch_size
    order = rng.permutation(n)
    t0 = time.perf_counter()
    tot_l = tot_r = tot_s = 0.0
    correct = 0
    names, values, grads = net.parameters()
    for start in range(0, n, bs):
        idx = order[start : start + bs]
        xb = np.ascontiguousarray(images[idx])
        yb = labels[idx]
        mb = masks[idx]
        probs, seg_logits, caches = net.forward(xb, mode="train")
        l_rec, d_rec = losses.recognition_loss(probs, yb)
        l_seg, d_seg = losses.segmentation_loss(seg_logits, mb)
        net.backward(caches, cfg.lambda_rec * d_rec, cfg.lambda_seg * d_seg)
        sgd_step(values, grads, state)
        k = len(idx)
        tot_r += l_rec * k
        tot_s += l_seg * k
        tot_l += losses.joint_loss(l_rec, l_seg, cfg.lambda_rec, cfg.lambda_seg) * k
        correct += int(np.sum(losses.predict_classes(probs) == yb))
    summary = EpochSummary(
        epoch=state.epoch,
        lr=state.lr,
        loss=tot_l / n,
        rec_loss=tot_r / n,
        seg_loss=tot_s / n,
        train_acc=correct / n,
        seconds=time.perf_counter() - t0,
    )
    state.epoch += 1
    return summary


LOG_FIELDS = ("epoch", "lr", "loss", "rec_loss", "seg_loss", "train_acc")


class EpochLogWriter:
    """Two CSVs per run: `train_log.csv` holds the deterministic per-epoch
    quantities (identical bytes for identical config+seed); wall-clock
    seconds go to the sibling `timing.csv` so timing noise never breaks
    run-to-run comparisons."""

    def __init__(self, out_dir):
        self.log_path = out_dir / "train_log.csv"
        self.timing_path = out_dir / "timing.csv"
        with open(self.log_path, "w", newline="") as fh:
            csv.writer(fh).writerow(LOG_FIELDS)
        with open(self.timing_path, "w", newline="") as fh:
            csv.writer(fh).writerow(("epoch", "seconds"))

    def append(self, s: EpochSummary):
        with open(self.log_path, "a", newline="") as fh:
            csv.writer(fh).writerow(
                (s.epoch, repr(s.lr), repr(s.loss), repr(s.rec_loss),
                 repr(s.seg_loss), repr(s.train_acc)))
        with open(self.timing_path, "a", newline="") as fh:
            csv.writer(fh).writerow((s.epoch, f"{s.seconds:.3f}"))
