"""Finite-difference verification of every analytic gradient.

The oracle only ever calls forward passes: a scalar probe loss
L = sum(output * probe) is differentiated by central differences with
step h and compared element-wise against what the backward passes
produce. The same machinery drives the whole-network check, where the
probe is the actual joint loss on a miniature configuration.
"""

from __future__ import annotations

import numpy as np

from . import layers, losses
from .network import MtlNetwork, NetworkConfig
from .tensor import DTYPE, Rng

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-4


def numerical_gradient(f, x: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """Central-difference gradient of scalar f with respect to x,
    perturbing one element at a time (x is restored afterwards)."""
    g = np.zeros_like(x, dtype=DTYPE)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """max |a-b| / max(|a|, |b|, floor) over all elements."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def _probe_loss(y: np.ndarray, probe: np.ndarray) -> float:
    return float(np.sum(y * probe))


def check_conv(rng: Rng, h: float = DEFAULT_H) -> float:
    n, ci, co = 1, 2, 3
    hh, ww, k = 6, 6, 3
    x = rng.normal(0, 1, (n, ci, hh, ww))
    p = layers.ConvParams(rng.normal(0, 0.5, (co, ci, k, k)),
                          rng.normal(0, 0.5, co), stride=1, pad=1)
    probe = rng.normal(0, 1, layers.conv_forward(x, p)[0].shape)
    y, cache = layers.conv_forward(x, p)
    p.zero_grads()
    d_in = layers.conv_backward(probe, cache, p)
    err = rel_error(d_in, numerical_gradient(
        lambda: _probe_loss(layers.conv_forward(x, p)[0], probe), x, h))
    err = max(err, rel_error(p.grad_w, numerical_gradient(
        lambda: _probe_loss(layers.conv_forward(x, p)[0], probe), p.w, h)))
    err = max(err, rel_error(p.grad_b, numerical_gradient(
        lambda: _probe_loss(layers.conv_forward(x, p)[0], probe), p.b, h)))
    return err


def check_tconv(rng: Rng, h: float = DEFAULT_H) -> float:
    n, ci, co, k = 1, 2, 3, 2
    x = rng.normal(0, 1, (n, ci, 3, 3))
    p = layers.TransposedConvParams(rng.normal(0, 0.5, (ci, co, k, k)),
                                    rng.normal(0, 0.5, co), up=2)
    y, cache = layers.tconv_forward(x, p)
    probe = rng.normal(0, 1, y.shape)
    p.zero_grads()
    d_in = layers.tconv_backward(probe, cache, p)
    err = rel_error(d_in, numerical_gradient(
        lambda: _probe_loss(layers.tconv_forward(x, p)[0], probe), x, h))
    err = max(err, rel_error(p.grad_w, numerical_gradient(
        lambda: _probe_loss(layers.tconv_forward(x, p)[0], probe), p.w, h)))
    err = max(err, rel_error(p.grad_b, numerical_gradient(
        lambda: _probe_loss(layers.tconv_forward(x, p)[0], probe), p.b, h)))
    return err


def check_bn(rng: Rng, h: float = DEFAULT_H) -> float:
    n, c, hh, ww = 4, 3, 3, 3
    x = rng.normal(0, 1, (n, c, hh, ww))
    p = layers.BNParams(c)
    p.gamma[...] = rng.normal(1.0, 0.3, c)
    p.beta[...] = rng.normal(0.0, 0.3, c)
    probe = rng.normal(0, 1, x.shape)

    def f():
        return _probe_loss(layers.bn_forward(x, p, "train")[0], probe)

    _, cache = layers.bn_forward(x, p, "train")
    p.zero_grads()
    d_in = layers.bn_backward(probe, cache, p)
    err = rel_error(d_in, numerical_gradient(f, x, h))
    err = max(err, rel_error(p.grad_gamma, numerical_gradient(f, p.gamma, h)))
    err = max(err, rel_error(p.grad_beta, numerical_gradient(f, p.beta, h)))
    return err


def check_relu(rng: Rng, h: float = DEFAULT_H) -> float:
    x = rng.normal(0, 1, (2, 3, 4, 4))
    # keep inputs away from the kink so finite differences are valid
    x = np.where(np.abs(x) < 1e-3, np.sign(x) * 0.1 + x, x)
    probe = rng.normal(0, 1, x.shape)
    _, cache = layers.relu_forward(x)
    d_in = layers.relu_backward(probe, cache)
    return rel_error(d_in, numerical_gradient(
        lambda: _probe_loss(layers.relu_forward(x)[0], probe), x, h))


def check_maxpool(rng: Rng, h: float = DEFAULT_H) -> float:
    n, c, hh, ww = 2, 2, 6, 6
    # distinct values with comfortable gaps: a shuffled grid
    x = (rng.permutation(n * c * hh * ww).astype(DTYPE) * 0.1).reshape(n, c, hh, ww)
    probe = rng.normal(0, 1, (n, c, hh // 2, ww // 2))
    _, idx = layers.maxpool_forward(x)
    d_in = layers.maxpool_backward(probe, idx)
    return rel_error(d_in, numerical_gradient(
        lambda: _probe_loss(layers.maxpool_forward(x)[0], probe), x, h))


def check_recognition_loss(rng: Rng, h: float = DEFAULT_H) -> float:
    batch, c = 4, 5
    logits = rng.normal(0, 1, (batch, c))
    labels = rng.integers(0, c, batch)

    def f():
        probs = layers.softmax(logits)
        return losses.recognition_loss(probs, labels)[0]

    _, d_logits = losses.recognition_loss(layers.softmax(logits), labels)
    return rel_error(d_logits, numerical_gradient(f, logits, h), floor=1e-8)


def check_segmentation_loss(rng: Rng, h: float = DEFAULT_H) -> float:
    batch, v, hh, ww = 2, 3, 3, 3
    seg_logits = rng.normal(0, 1, (batch, v, hh, ww))
    masks = rng.integers(0, v, (batch, hh, ww))
    _, d_logits = losses.segmentation_loss(seg_logits, masks)
    return rel_error(d_logits, numerical_gradient(
        lambda: losses.segmentation_loss(seg_logits, masks)[0], seg_logits, h),
        floor=1e-8)


LAYER_CHECKS = {
    "conv": check_conv,
    "tconv": check_tconv,
    "batchnorm": check_bn,
    "relu": check_relu,
    "maxpool": check_maxpool,
    "recognition_loss": check_recognition_loss,
    "segmentation_loss": check_segmentation_loss,
}


def check_layers(seed: int = 0, cases: int = 20, h: float = DEFAULT_H) -> dict:
    """Max relative error per layer type over `cases` random instances."""
    rng = Rng(seed)
    report = {}
    for name, fn in LAYER_CHECKS.items():
        worst = 0.0
        for i in range(cases):
            worst = max(worst, fn(rng.derive(i), h))
        report[name] = worst
    return report


def miniature_config(**overrides) -> NetworkConfig:
    # weight_std 0.1 keeps every activation O(1): the tiny training init
    # makes the encoder batch norms run at huge gain (finite differences
    # drown in curvature noise), while large weights saturate the decoder
    # softmax (the clamped log goes flat where the fused gradient is not)
    base = dict(input_hw=(16, 16), num_classes=3, num_seg_classes=2,
                encoder_channels=(4, 8, 8), encoder_kernels=(3, 3, 3),
                rec_channels=8, rec_kernel=3, batch_size=2, seed=7,
                weight_std=0.1)
    base.update(overrides)
    return NetworkConfig(**base)


def check_network(config: NetworkConfig | None = None, seed: int = 0,
                  h: float = 1e-6, batch: int = 2):
    """Finite-difference check of every parameter of the joint loss on a
    miniature network. Returns (max rel error, per-parameter dict).

    The step is smaller than the per-layer default because a parameter
    perturbation here cascades through every ReLU and pool downstream: at
    h=1e-5 an occasional kink falls inside the interval and corrupts the
    difference quotient by O(h), which has nothing to do with the gradient
    being checked."""
    cfg = config or miniature_config()
    rng = Rng(seed)
    net = MtlNetwork(cfg, rng.derive(1))
    hh, ww = cfg.input_hw
    x = rng.normal(0.3, 0.5, (batch, cfg.in_channels, hh, ww))
    labels = rng.integers(0, cfg.num_classes, batch)
    masks = rng.integers(0, cfg.num_seg_classes, (batch, hh, ww))

    def joint():
        probs, seg_logits, _ = net.forward(x, mode="train")
        l_rec, _ = losses.recognition_loss(probs, labels)
        l_seg, _ = losses.segmentation_loss(seg_logits, masks)
        return losses.joint_loss(l_rec, l_seg, cfg.lambda_rec, cfg.lambda_seg)

    probs, seg_logits, caches = net.forward(x, mode="train")
    _, d_rec = losses.recognition_loss(probs, labels)
    _, d_seg = losses.segmentation_loss(seg_logits, masks)
    net.backward(caches, cfg.lambda_rec * d_rec, cfg.lambda_seg * d_seg)

    names, values, grads = net.parameters()
    per_param = {}
    for name, value, grad in zip(names, values, grads):
        numeric = numerical_gradient(joint, value, h)
        # floor 1e-5: biases feeding a BN have near-cancelled gradients, and
        # central differences carry ~1e-9 absolute noise at h=1e-5
        per_param[name] = rel_error(grad, numeric, floor=1e-5)
    return max(per_param.values()), per_param


def run_verification(seed: int = 0, cases: int = 20, tol: float = DEFAULT_TOL,
                     network_config: NetworkConfig | None = None) -> dict:
    """Full suite: per-layer checks plus the whole-network check.

    Returns {"layers": {...}, "network": err, "tolerance": tol,
    "passed": bool}.
    """
    layer_report = check_layers(seed=seed, cases=cases)
    net_err, _ = check_network(config=network_config, seed=seed)
    worst = max(max(layer_report.values()), net_err)
    return {
        "layers": layer_report,
        "network": net_err,
        "tolerance": tol,
        "max_error": worst,
        "passed": bool(worst < tol),
    }
