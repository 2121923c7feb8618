"""Layer forward/backward passes: convolution, transposed convolution,
batch normalization, ReLU, 2x2 max pooling, and softmax.

Every layer is a pure function of (input, params) returning (output, cache);
the matching backward consumes (upstream delta, cache, params), returns the
delta for the layer below, and accumulates parameter gradients into the
params record. Deltas coming out of the losses already carry the 1/batch
normalization, so accumulated gradients are gradients of the mean loss and
the optimizer applies them as-is.

Convolution is computed as cross-correlation (no kernel flip); the backward
pass is its exact adjoint, which the adjoint-identity tests pin down.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .tensor import DTYPE, Rng, gaussian_fill, require_nchw


class ConvParams:
    """Learnable state of a convolutional layer.

    w: (out_ch, in_ch, kh, kw), b: (out_ch,). Gradient buffers have the
    same shapes and are accumulated by `conv_backward`.
    """

    def __init__(self, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 0):
        w = np.asarray(w, dtype=DTYPE)
        b = np.asarray(b, dtype=DTYPE)
        if w.ndim != 4 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ValueError(f"bad conv parameter shapes w={w.shape} b={b.shape}")
        if w.shape[2] < 1 or w.shape[3] < 1 or stride < 1 or pad < 0:
            raise ValueError("kernel dims and stride must be >= 1, pad >= 0")
        self.w = w
        self.b = b
        self.stride = int(stride)
        self.pad = int(pad)
        self.grad_w = np.zeros_like(w)
        self.grad_b = np.zeros_like(b)

    @classmethod
    def init(cls, in_ch, out_ch, k, rng: Rng, stride=1, pad=0,
             weight_std=0.01, bias_const=0.1) -> "ConvParams":
        w = gaussian_fill((out_ch, in_ch, k, k), 0.0, weight_std, rng)
        b = np.full(out_ch, bias_const, dtype=DTYPE)
        return cls(w, b, stride=stride, pad=pad)

    def zero_grads(self):
        self.grad_w[...] = 0.0
        self.grad_b[...] = 0.0

    def param_items(self):
        return [("w", self.w, self.grad_w), ("b", self.b, self.grad_b)]


class TransposedConvParams:
    """Learnable state of a transposed (fractionally strided) convolution.

    w: (in_ch, out_ch, kh, kw), b: (out_ch,). `up` is the upsampling
    factor: the layer is the adjoint of a convolution with stride `up`
    and no padding, so output spatial size is up*(in - 1) + k.
    """

    def __init__(self, w: np.ndarray, b: np.ndarray, up: int = 2):
        w = np.asarray(w, dtype=DTYPE)
        b = np.asarray(b, dtype=DTYPE)
        if w.ndim != 4 or b.ndim != 1 or b.shape[0] != w.shape[1]:
            raise ValueError(f"bad tconv parameter shapes w={w.shape} b={b.shape}")
        if up < 1:
            raise ValueError("up factor must be >= 1")
        self.w = w
        self.b = b
        self.up = int(up)
        self.grad_w = np.zeros_like(w)
        self.grad_b = np.zeros_like(b)

    @classmethod
    def init(cls, in_ch, out_ch, k, rng: Rng, up=2,
             weight_std=0.01, bias_const=0.1) -> "TransposedConvParams":
        w = gaussian_fill((in_ch, out_ch, k, k), 0.0, weight_std, rng)
        b = np.full(out_ch, bias_const, dtype=DTYPE)
        return cls(w, b, up=up)

    def zero_grads(self):
        self.grad_w[...] = 0.0
        self.grad_b[...] = 0.0

    def param_items(self):
        return [("w", self.w, self.grad_w), ("b", self.b, self.grad_b)]


class BNParams:
    """Batch-normalization state: per-channel scale/shift plus running
    statistics for inference. Running stats follow an exponential moving
    average, mu <- momentum*mu + (1-momentum)*mu_batch, and are unset
    until the first training-mode forward."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9):
        if eps <= 0 or not (0.0 < momentum < 1.0):
            raise ValueError("need eps > 0 and momentum in (0, 1)")
        self.gamma = np.ones(channels, dtype=DTYPE)
        self.beta = np.zeros(channels, dtype=DTYPE)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.running_mean = np.zeros(channels, dtype=DTYPE)
        self.running_var = np.ones(channels, dtype=DTYPE)
        self.initialized = False
        self.grad_gamma = np.zeros(channels, dtype=DTYPE)
        self.grad_beta = np.zeros(channels, dtype=DTYPE)

    def zero_grads(self):
        self.grad_gamma[...] = 0.0
        self.grad_beta[...] = 0.0

    def param_items(self):
        return [("gamma", self.gamma, self.grad_gamma),
                ("beta", self.beta, self.grad_beta)]


class ConvCache(NamedTuple):
    xp: np.ndarray        # zero-padded input
    in_shape: tuple
    out_hw: tuple


class TConvCache(NamedTuple):
    x: np.ndarray
    out_hw: tuple


class BNCache(NamedTuple):
    xhat: np.ndarray
    inv_std: np.ndarray   # per channel, shape (c,)
    train: bool


class PoolIndices(NamedTuple):
    """Argmax bookkeeping of a 2x2/2 max pool: for each output element the
    flat spatial coordinate (row*w + col) of the selected input maximum."""
    flat: np.ndarray      # (n, c, oh, ow) int64
    input_hw: tuple


def _tap_slice(start: int, count: int, stride: int) -> slice:
    return slice(start, start + stride * (count - 1) + 1, stride)


def _im2col(xp: np.ndarray, kh: int, kw: int, s: int, oh: int, ow: int) -> np.ndarray:
    """(n, ci, hp, wp) -> (ci*kh*kw, n*oh*ow) patch matrix, built tap by
    tap so every copy lands in one contiguous destination block."""
    n, ci = xp.shape[:2]
    cols = np.empty((ci, kh, kw, n, oh, ow), dtype=DTYPE)
    for u in range(kh):
        ru = _tap_slice(u, oh, s)
        for v in range(kw):
            cols[:, u, v] = xp[:, :, ru, _tap_slice(v, ow, s)].transpose(1, 0, 2, 3)
    return cols.reshape(ci * kh * kw, n * oh * ow)


def conv_forward(x: np.ndarray, p: ConvParams):
    """Strided cross-correlation: y[n,j] = sum_i x[n,i] (*) w[j,i] + b[j].

    Output spatial size is floor((h + 2*pad - kh)/stride) + 1 per axis.
    Computed as one patch-matrix GEMM. Returns (y, cache); the cache holds
    the padded input for backward.
    """
    x = require_nchw(x, "conv input")
    n, ci, h, w = x.shape
    co, ci_k, kh, kw = p.w.shape
    if ci != ci_k:
        raise ValueError(f"channel mismatch: input has {ci}, kernels expect {ci_k}")
    s = p.stride
    if p.pad:
        xp = np.zeros((n, ci, h + 2 * p.pad, w + 2 * p.pad), dtype=DTYPE)
        xp[:, :, p.pad : p.pad + h, p.pad : p.pad + w] = x
    else:
        xp = x
    hp, wp = xp.shape[2:]
    oh = (hp - kh) // s + 1
    ow = (wp - kw) // s + 1
    if oh < 1 or ow < 1:
        raise ValueError(f"non-positive output size for input {h}x{w}, "
                         f"kernel {kh}x{kw}, stride {s}, pad {p.pad}")
    cols = _im2col(xp, kh, kw, s, oh, ow)
    y2 = p.w.reshape(co, -1) @ cols
    y = np.ascontiguousarray(y2.reshape(co, n, oh, ow).transpose(1, 0, 2, 3))
    y += p.b[None, :, None, None]
    return y, ConvCache(xp=xp, in_shape=x.shape, out_hw=(oh, ow))


def conv_backward(d_out: np.ndarray, cache: ConvCache, p: ConvParams) -> np.ndarray:
    """Adjoint of `conv_forward`; accumulates grad_w and grad_b.

    The input delta is the full correlation of d_out with the flipped
    kernels, realized as the exact transpose of the forward GEMM followed
    by a fold of the patch gradients back onto the padded input grid.
    """
    d_out = require_nchw(d_out, "conv delta")
    xp = cache.xp
    n, ci, h, w = cache.in_shape
    co, _, kh, kw = p.w.shape
    oh, ow = cache.out_hw
    if d_out.shape != (n, co, oh, ow):
        raise ValueError(f"delta shape {d_out.shape} does not match forward "
                         f"output {(n, co, oh, ow)}")
    s = p.stride
    dmat = np.ascontiguousarray(d_out.transpose(1, 0, 2, 3)).reshape(co, -1)
    cols = _im2col(xp, kh, kw, s, oh, ow)
    p.grad_w += (dmat @ cols.T).reshape(p.w.shape)
    p.grad_b += d_out.sum(axis=(0, 2, 3))
    dcols = p.w.reshape(co, -1).T @ dmat
    dc = dcols.reshape(ci, kh, kw, n, oh, ow)
    dxp = np.zeros_like(xp)
    for u in range(kh):
        ru = _tap_slice(u, oh, s)
        for v in range(kw):
            dxp[:, :, ru, _tap_slice(v, ow, s)] += dc[:, u, v].transpose(1, 0, 2, 3)
    if p.pad:
        return np.ascontiguousarray(dxp[:, :, p.pad : p.pad + h, p.pad : p.pad + w])
    return dxp


def tconv_forward(x: np.ndarray, p: TransposedConvParams):
    """Transposed convolution: the adjoint of a stride-`up` convolution.

    Each input pixel spreads through the kernel onto an up-sampled grid:
    y[n,o, up*r+u, up*c+v] += sum_i x[n,i,r,c] * w[i,o,u,v], plus bias.
    Output spatial size is up*(in - 1) + k.
    """
    x = require_nchw(x, "tconv input")
    n, ci, h, w = x.shape
    ci_k, co, kh, kw = p.w.shape
    if ci != ci_k:
        raise ValueError(f"channel mismatch: input has {ci}, kernels expect {ci_k}")
    s = p.up
    oh = s * (h - 1) + kh
    ow = s * (w - 1) + kw
    acc = np.zeros((co, n, oh, ow), dtype=DTYPE)
    for u in range(kh):
        ru = _tap_slice(u, h, s)
        for v in range(kw):
            acc[:, :, ru, _tap_slice(v, w, s)] += np.tensordot(
                p.w[:, :, u, v], x, axes=([0], [1])
            )
    y = np.ascontiguousarray(acc.transpose(1, 0, 2, 3))
    y += p.b[None, :, None, None]
    return y, TConvCache(x=x, out_hw=(oh, ow))


def tconv_backward(d_out: np.ndarray, cache: TConvCache, p: TransposedConvParams) -> np.ndarray:
    """Adjoint of `tconv_forward`: the input delta is the stride-`up`
    correlation of d_out with the same (unflipped) kernels, which is
    element-wise identical to `conv_forward` with these kernels."""
    d_out = require_nchw(d_out, "tconv delta")
    x = cache.x
    n, ci, h, w = x.shape
    _, co, kh, kw = p.w.shape
    oh, ow = cache.out_hw
    if d_out.shape != (n, co, oh, ow):
        raise ValueError(f"delta shape {d_out.shape} does not match forward "
                         f"output {(n, co, oh, ow)}")
    s = p.up
    d_in = np.zeros((ci, n, h, w), dtype=DTYPE)
    for u in range(kh):
        ru = _tap_slice(u, h, s)
        for v in range(kw):
            ds = d_out[:, :, ru, _tap_slice(v, w, s)]
            d_in += np.tensordot(p.w[:, :, u, v], ds, axes=([1], [1]))
            p.grad_w[:, :, u, v] += np.tensordot(x, ds, axes=([0, 2, 3], [0, 2, 3]))
    p.grad_b += d_out.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(d_in.transpose(1, 0, 2, 3))


def bn_forward(x: np.ndarray, p: BNParams, mode: str = "train"):
    """Per-channel batch normalization over (batch, h, w).

    Training mode normalizes with the biased batch mean/variance, applies
    gamma/beta, and updates the running statistics. Eval mode normalizes
    with the running statistics and is an error before any training call.
    """
    x = require_nchw(x, "bn input")
    c = x.shape[1]
    if p.gamma.shape[0] != c:
        raise ValueError(f"channel mismatch: input has {c}, bn has {p.gamma.shape[0]}")
    if mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + p.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        p.running_mean = p.momentum * p.running_mean + (1.0 - p.momentum) * mean
        p.running_var = p.momentum * p.running_var + (1.0 - p.momentum) * var
        p.initialized = True
    elif mode == "eval":
        if not p.initialized:
            raise RuntimeError("bn eval mode before any training pass: "
                               "uninitialized statistics")
        inv_std = 1.0 / np.sqrt(p.running_var + p.eps)
        xhat = (x - p.running_mean[None, :, None, None]) * inv_std[None, :, None, None]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    y = p.gamma[None, :, None, None] * xhat + p.beta[None, :, None, None]
    return y, BNCache(xhat=xhat, inv_std=inv_std, train=(mode == "train"))


def bn_backward(d_out: np.ndarray, cache: BNCache, p: BNParams) -> np.ndarray:
    """Exact gradient through the normalization, including the dependence
    of the batch mean and variance on every element."""
    d_out = require_nchw(d_out, "bn delta")
    xhat = cache.xhat
    if d_out.shape != xhat.shape:
        raise ValueError(f"delta shape {d_out.shape} != input shape {xhat.shape}")
    p.grad_gamma += np.sum(d_out * xhat, axis=(0, 2, 3))
    p.grad_beta += np.sum(d_out, axis=(0, 2, 3))
    g = p.gamma[None, :, None, None]
    if not cache.train:
        return d_out * g * cache.inv_std[None, :, None, None]
    n, c, h, w = d_out.shape
    m = n * h * w
    dxhat = d_out * g
    sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
    return (cache.inv_std[None, :, None, None] / m) * (
        m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat
    )


def relu_forward(x: np.ndarray):
    """y = max(x, 0); the cache is the input."""
    x = require_nchw(x, "relu input")
    return np.maximum(x, 0.0), x


def relu_backward(d_out: np.ndarray, cache: np.ndarray) -> np.ndarray:
    """Pass deltas where the input was strictly positive; subgradient at
    exactly zero is zero."""
    return d_out * (cache > 0.0)


def maxpool_forward(x: np.ndarray):
    """2x2 max pooling with stride 2. Spatial dims must be even.

    Ties break toward the smallest flat input index, which argmax over the
    row-major window order gives for free. Returns (y, PoolIndices).
    """
    x = require_nchw(x, "pool input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max pool needs even spatial dims, got {h}x{w}")
    oh, ow = h // 2, w // 2
    windows = x.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    loc = np.argmax(windows, axis=4)
    y = np.take_along_axis(windows, loc[..., None], axis=4)[..., 0]
    oy, ox = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    rows = 2 * oy[None, None] + loc // 2
    cols = 2 * ox[None, None] + loc % 2
    flat = (rows * w + cols).astype(np.int64)
    return np.ascontiguousarray(y), PoolIndices(flat=flat, input_hw=(h, w))


def maxpool_backward(d_out: np.ndarray, indices: PoolIndices) -> np.ndarray:
    """Route each output delta to its stored argmax position; everything
    else receives zero."""
    d_out = require_nchw(d_out, "pool delta")
    n, c, oh, ow = d_out.shape
    h, w = indices.input_hw
    flat = indices.flat
    if flat.shape != (n, c, oh, ow):
        raise ValueError(f"indices shape {flat.shape} != delta shape {d_out.shape}")
    if flat.min() < 0 or flat.max() >= h * w:
        raise IndexError("pool indices out of bounds (corrupted cache)")
    d_in = np.zeros((n, c, h * w), dtype=DTYPE)
    # windows are disjoint, so each target cell is written at most once
    np.put_along_axis(d_in, flat.reshape(n, c, -1), d_out.reshape(n, c, -1), axis=2)
    return d_in.reshape(n, c, h, w)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction. Accepts (c,) or (batch, c)."""
    z = np.asarray(logits, dtype=DTYPE)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValueError(f"need (batch, c) logits with c >= 2, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if squeeze else out
