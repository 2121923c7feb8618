"""Shared-encoder / dual-decoder network for joint chip classification and
per-pixel segmentation.

Topology (input h x w, h and w divisible by 8). Batch normalization sits
in front of every convolutional layer, in both the trunk and the two
heads; with the tiny Gaussian weight init these BNs are what keep forward
activations and backward deltas at workable scale at every depth.

  encoder    three stages of BN -> conv(same) -> ReLU -> 2x2 max pool,
             spatial sizes h -> h/2 -> h/4 -> h/8; the pre-pool feature of
             each stage is kept as the skip source for the decoder.
  recognition  BN -> conv(same) -> ReLU -> 2x2 max pool -> BN -> 1x1 conv
             to C -> global average -> softmax. When h/8 is odd the pool
             drops the last row/column first (delta is zero-padded back on
             the way down).
  segmentation three stages of (x2 transposed conv -> channel concat with
             the same-resolution encoder feature -> BN -> conv(same)),
             then BN -> a final 1x1 conv to V logit channels. No
             activation functions in this branch; the per-pixel softmax
             lives in the loss.

Both heads consume the same encoder features, and the encoder gradient is
the sum of what the two heads send back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import layers
from .layers import BNParams, ConvParams, TransposedConvParams
from .tensor import DTYPE, Rng, require_nchw

CHECKPOINT_VERSION = 1


@dataclass
class NetworkConfig:
    input_hw: tuple = (88, 88)
    in_channels: int = 1
    num_classes: int = 10
    num_seg_classes: int = 2
    encoder_channels: tuple = (16, 32, 64)
    encoder_kernels: tuple = (5, 5, 3)
    decoder_channels: tuple = ()      # empty = mirror of encoder_channels
    decoder_kernel: int = 3
    up_kernel: int = 2
    up_factor: int = 2
    rec_channels: int = 128
    rec_kernel: int = 3
    weight_std: float = 0.01
    bias_const: float = 0.1
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9
    lambda_rec: float = 1.0
    lambda_seg: float = 1.0
    lr: float = 0.001
    lr_decay: float = 0.1
    lr_decay_period: int = 5
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0

    def __post_init__(self):
        self.input_hw = tuple(int(v) for v in self.input_hw)
        self.encoder_channels = tuple(int(v) for v in self.encoder_channels)
        self.encoder_kernels = tuple(int(v) for v in self.encoder_kernels)
        self.decoder_channels = tuple(int(v) for v in self.decoder_channels)
        if not self.decoder_channels:
            self.decoder_channels = tuple(reversed(self.encoder_channels))
        self.validate()

    def validate(self):
        h, w = self.input_hw
        if h % 8 or w % 8 or h < 16 or w < 16:
            raise ValueError(f"input size {h}x{w} must be divisible by 8 and >= 16")
        if self.num_classes < 2 or self.num_seg_classes < 2:
            raise ValueError("need num_classes >= 2 and num_seg_classes >= 2")
        if len(self.encoder_channels) != 3 or len(self.encoder_kernels) != 3:
            raise ValueError("encoder needs exactly three stages")
        if len(self.decoder_channels) != 3:
            raise ValueError("decoder needs exactly three stages")
        for c in (*self.encoder_channels, *self.decoder_channels,
                  self.rec_channels, self.in_channels):
            if c < 1:
                raise ValueError("channel counts must be >= 1")
        for k in (*self.encoder_kernels, self.decoder_kernel, self.rec_kernel):
            if k < 1 or k % 2 == 0:
                raise ValueError("conv kernels must be odd (same-size padding)")
        if self.up_kernel != self.up_factor:
            raise ValueError("up_kernel must equal up_factor so each decoder "
                             "stage doubles the spatial size exactly")
        if self.lambda_rec < 0 or self.lambda_seg < 0:
            raise ValueError("loss weights must be >= 0")
        if self.weight_std < 0:
            raise ValueError("weight_std must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}; "
                             f"valid keys: {sorted(known)}")
        return cls(**d)


class MtlNetwork:
    """Parameter container plus forward/backward orchestration."""

    def __init__(self, config: NetworkConfig, rng: Rng | None = None):
        cfg = config
        self.config = cfg
        rng = rng if rng is not None else Rng(cfg.seed)
        std, bc = cfg.weight_std, cfg.bias_const
        c1, c2, c3 = cfg.encoder_channels
        k1, k2, k3 = cfg.encoder_kernels
        d1, d2, d3 = cfg.decoder_channels
        dk = cfg.decoder_kernel

        ins = (cfg.in_channels, c1, c2)
        self.enc_bn = [BNParams(ins[i], eps=cfg.bn_eps, momentum=cfg.bn_momentum)
                       for i in range(3)]
        self.enc_conv = [
            ConvParams.init(ins[0], c1, k1, rng.derive(0), pad=k1 // 2, weight_std=std, bias_const=bc),
            ConvParams.init(ins[1], c2, k2, rng.derive(1), pad=k2 // 2, weight_std=std, bias_const=bc),
            ConvParams.init(ins[2], c3, k3, rng.derive(2), pad=k3 // 2, weight_std=std, bias_const=bc),
        ]
        self.rec_bn = [BNParams(c3, eps=cfg.bn_eps, momentum=cfg.bn_momentum),
                       BNParams(cfg.rec_channels, eps=cfg.bn_eps, momentum=cfg.bn_momentum)]
        self.rec_conv1 = ConvParams.init(c3, cfg.rec_channels, cfg.rec_kernel,
                                         rng.derive(3), pad=cfg.rec_kernel // 2,
                                         weight_std=std, bias_const=bc)
        self.rec_convc = ConvParams.init(cfg.rec_channels, cfg.num_classes, 1,
                                         rng.derive(4), weight_std=std, bias_const=bc)
        self.seg_tconv = [
            TransposedConvParams.init(c3, d1, cfg.up_kernel, rng.derive(5),
                                      up=cfg.up_factor, weight_std=std, bias_const=bc),
            TransposedConvParams.init(d1, d2, cfg.up_kernel, rng.derive(6),
                                      up=cfg.up_factor, weight_std=std, bias_const=bc),
            TransposedConvParams.init(d2, d3, cfg.up_kernel, rng.derive(7),
                                      up=cfg.up_factor, weight_std=std, bias_const=bc),
        ]
        self.seg_bn = [BNParams(n_ch, eps=cfg.bn_eps, momentum=cfg.bn_momentum)
                       for n_ch in (d1 + c3, d2 + c2, d3 + c1, d3)]
        self.seg_conv = [
            ConvParams.init(d1 + c3, d1, dk, rng.derive(8), pad=dk // 2, weight_std=std, bias_const=bc),
            ConvParams.init(d2 + c2, d2, dk, rng.derive(9), pad=dk // 2, weight_std=std, bias_const=bc),
            ConvParams.init(d3 + c1, d3, dk, rng.derive(10), pad=dk // 2, weight_std=std, bias_const=bc),
        ]
        self.seg_out = ConvParams.init(d3, cfg.num_seg_classes, 1, rng.derive(11),
                                       weight_std=std, bias_const=bc)
        self._check_spatial_plan()

    # -- construction-time size arithmetic ---------------------------------

    def _check_spatial_plan(self):
        h, w = self.config.input_hw
        sizes = [(h, w)]
        for _ in range(3):
            h, w = h // 2, w // 2      # same-pad conv keeps size; pool halves
            sizes.append((h, w))
        up = self.config.up_factor
        dh, dw = sizes[3]
        for back in (2, 1, 0):
            dh, dw = dh * up, dw * up
            if (dh, dw) != sizes[back]:
                raise ValueError(f"decoder stage restores {dh}x{dw}, expected "
                                 f"skip size {sizes[back]}")
        if (dh, dw) != self.config.input_hw:
            raise ValueError("decoder does not restore the input size")
        rh = sizes[3][0]
        if rh < 2:
            raise ValueError("encoder output too small for the recognition pool")
        self.encoder_sizes = sizes  # [(h,w), (h/2,w/2), (h/4,w/4), (h/8,w/8)]

    # -- parameter plumbing -------------------------------------------------

    def named_params(self):
        """(name, params-record) pairs in fixed order."""
        out = []
        for i in range(3):
            out.append((f"enc{i + 1}.bn", self.enc_bn[i]))
            out.append((f"enc{i + 1}.conv", self.enc_conv[i]))
        out.append(("rec.bn1", self.rec_bn[0]))
        out.append(("rec.conv1", self.rec_conv1))
        out.append(("rec.bn2", self.rec_bn[1]))
        out.append(("rec.convc", self.rec_convc))
        for i in range(3):
            out.append((f"seg.tconv{i + 1}", self.seg_tconv[i]))
            out.append((f"seg.bn{i + 1}", self.seg_bn[i]))
            out.append((f"seg.conv{i + 1}", self.seg_conv[i]))
        out.append(("seg.bn4", self.seg_bn[3]))
        out.append(("seg.out", self.seg_out))
        return out

    def bn_records(self):
        return [rec for _, rec in self.named_params() if isinstance(rec, BNParams)]

    def parameters(self):
        """Parallel (names, values, grads) lists over every learnable array."""
        names, values, grads = [], [], []
        for prefix, rec in self.named_params():
            for field_name, value, grad in rec.param_items():
                names.append(f"{prefix}.{field_name}")
                values.append(value)
                grads.append(grad)
        return names, values, grads

    def num_parameters(self) -> int:
        _, values, _ = self.parameters()
        return int(sum(v.size for v in values))

    def zero_grads(self):
        for _, rec in self.named_params():
            rec.zero_grads()

    # -- forward ------------------------------------------------------------

    def encoder_forward(self, x: np.ndarray, mode: str = "train"):
        """Run the shared trunk; returns (pooled output, skip features, caches)."""
        x = require_nchw(x, "network input")
        if x.shape[2:] != self.config.input_hw:
            raise ValueError(f"input spatial size {x.shape[2:]} != "
                             f"configured {self.config.input_hw}")
        if x.shape[1] != self.config.in_channels:
            raise ValueError(f"input has {x.shape[1]} channels, expected "
                             f"{self.config.in_channels}")
        feats, caches = [], []
        cur = x
        for i in range(3):
            a, bn_c = layers.bn_forward(cur, self.enc_bn[i], mode)
            c, conv_c = layers.conv_forward(a, self.enc_conv[i])
            f, relu_c = layers.relu_forward(c)
            p, pool_i = layers.maxpool_forward(f)
            feats.append(f)
            caches.append((bn_c, conv_c, relu_c, pool_i))
            cur = p
        return cur, feats, caches

    def recognition_forward(self, trunk: np.ndarray, mode: str = "train"):
        a1, bn1_c = layers.bn_forward(trunk, self.rec_bn[0], mode)
        r, conv1_c = layers.conv_forward(a1, self.rec_conv1)
        f, relu_c = layers.relu_forward(r)
        n, c, h, w = f.shape
        eh, ew = h - h % 2, w - w % 2
        fc = np.ascontiguousarray(f[:, :, :eh, :ew]) if (eh, ew) != (h, w) else f
        q, pool_i = layers.maxpool_forward(fc)
        a2, bn2_c = layers.bn_forward(q, self.rec_bn[1], mode)
        z, convc_c = layers.conv_forward(a2, self.rec_convc)
        logits = z.mean(axis=(2, 3))
        probs = layers.softmax(logits)
        cache = (bn1_c, conv1_c, relu_c, (h, w), pool_i, bn2_c, convc_c, z.shape)
        return probs, logits, cache

    def segmentation_forward(self, trunk: np.ndarray, feats: list, mode: str = "train"):
        cur = trunk
        caches = []
        for i in range(3):
            u, t_c = layers.tconv_forward(cur, self.seg_tconv[i])
            skip = feats[2 - i]
            m = np.concatenate([u, skip], axis=1)
            a, bn_c = layers.bn_forward(m, self.seg_bn[i], mode)
            s, c_c = layers.conv_forward(a, self.seg_conv[i])
            caches.append((t_c, u.shape[1], bn_c, c_c))
            cur = s
        a4, bn4_c = layers.bn_forward(cur, self.seg_bn[3], mode)
        logits, out_c = layers.conv_forward(a4, self.seg_out)
        caches.append((bn4_c, out_c))
        return logits, caches

    def forward(self, x: np.ndarray, mode: str = "train"):
        """Joint pass. Returns (class_probs, seg_logits, caches).

        class_probs: (batch, C) softmax rows; seg_logits: (batch, V, h, w)
        raw per-pixel logits. The caches feed `backward`.
        """
        trunk, feats, enc_caches = self.encoder_forward(x, mode)
        probs, _, rec_cache = self.recognition_forward(trunk, mode)
        seg_logits, seg_caches = self.segmentation_forward(trunk, feats, mode)
        caches = {"enc": enc_caches, "rec": rec_cache, "seg": seg_caches,
                  "trunk_shape": trunk.shape}
        return probs, seg_logits, caches

    # -- backward -----------------------------------------------------------

    def _recognition_backward(self, d_logits: np.ndarray, cache):
        bn1_c, conv1_c, relu_c, pre_crop_hw, pool_i, bn2_c, convc_c, z_shape = cache
        n, c, zh, zw = z_shape
        d_z = np.broadcast_to(
            d_logits[:, :, None, None] / (zh * zw), z_shape
        ).astype(DTYPE)
        d_a2 = layers.conv_backward(d_z, convc_c, self.rec_convc)
        d_q = layers.bn_backward(d_a2, bn2_c, self.rec_bn[1])
        d_fc = layers.maxpool_backward(d_q, pool_i)
        h, w = pre_crop_hw
        if d_fc.shape[2:] != (h, w):
            padded = np.zeros((d_fc.shape[0], d_fc.shape[1], h, w), dtype=DTYPE)
            padded[:, :, : d_fc.shape[2], : d_fc.shape[3]] = d_fc
            d_fc = padded
        d_r = layers.relu_backward(d_fc, relu_c)
        d_a1 = layers.conv_backward(d_r, conv1_c, self.rec_conv1)
        return layers.bn_backward(d_a1, bn1_c, self.rec_bn[0])

    def _segmentation_backward(self, d_seg_logits: np.ndarray, caches):
        bn4_c, out_c = caches[3]
        d_a4 = layers.conv_backward(d_seg_logits, out_c, self.seg_out)
        d_cur = layers.bn_backward(d_a4, bn4_c, self.seg_bn[3])
        skip_deltas = [None, None, None]   # indexed like feats (stage 1..3)
        for i in (2, 1, 0):
            t_c, u_channels, bn_c, c_c = caches[i]
            d_a = layers.conv_backward(d_cur, c_c, self.seg_conv[i])
            d_m = layers.bn_backward(d_a, bn_c, self.seg_bn[i])
            d_u = d_m[:, :u_channels]
            skip_deltas[2 - i] = d_m[:, u_channels:]
            d_cur = layers.tconv_backward(np.ascontiguousarray(d_u),
                                          t_c, self.seg_tconv[i])
        return d_cur, skip_deltas

    def backward(self, caches: dict, d_logits_rec: np.ndarray,
                 d_seg_logits: np.ndarray) -> np.ndarray:
        """Accumulate gradients for a batch and return the input delta.

        d_logits_rec is the loss gradient with respect to the pre-softmax
        recognition logits (the fused form the losses return);
        d_seg_logits with respect to the segmentation logit map. Gradient
        buffers are zeroed first, and the shared encoder receives the sum
        of both decoders' contributions.
        """
        self.zero_grads()
        d_trunk = np.zeros(caches["trunk_shape"], dtype=DTYPE)
        skip_deltas = [None, None, None]
        if d_logits_rec is not None:
            d_trunk = d_trunk + self._recognition_backward(d_logits_rec, caches["rec"])
        if d_seg_logits is not None:
            d_seg_trunk, skip_deltas = self._segmentation_backward(
                np.ascontiguousarray(d_seg_logits), caches["seg"])
            d_trunk = d_trunk + d_seg_trunk
        d_cur = d_trunk
        for i in (2, 1, 0):
            bn_c, conv_c, relu_c, pool_i = caches["enc"][i]
            d_f = layers.maxpool_backward(d_cur, pool_i)
            if skip_deltas[i] is not None:
                d_f = d_f + skip_deltas[i]
            d_c = layers.relu_backward(d_f, relu_c)
            d_a = layers.conv_backward(d_c, conv_c, self.enc_conv[i])
            d_cur = layers.bn_backward(d_a, bn_c, self.enc_bn[i])
        return d_cur


# -- checkpointing -----------------------------------------------------------


def _state_arrays(net: MtlNetwork) -> dict:
    arrays = {}
    for prefix, rec in net.named_params():
        for field_name, value, _ in rec.param_items():
            arrays[f"{prefix}.{field_name}"] = value
        if isinstance(rec, BNParams):
            arrays[f"{prefix}.running_mean"] = rec.running_mean
            arrays[f"{prefix}.running_var"] = rec.running_var
    return arrays


def save_checkpoint(net: MtlNetwork, path, extra: dict | None = None):
    """Write a versioned npz container: config + every parameter tensor +
    BN running statistics. Byte-identical for identical state."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": net.config.to_dict(),
        "bn_initialized": [bn.initialized for bn in net.bn_records()],
        "extra": extra or {},
    }
    arrays = _state_arrays(net)
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.bytes_(json.dumps(meta, sort_keys=True).encode()),
                 **arrays)


def load_checkpoint(path) -> tuple[MtlNetwork, dict]:
    """Rebuild a network from `save_checkpoint` output. Round-trips
    bit-exactly. Returns (network, extra-metadata dict)."""
    with np.load(path) as z:
        meta = json.loads(z["__meta__"].item().decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{meta.get('format_version')}")
        config = NetworkConfig.from_dict(meta["config"])
        net = MtlNetwork(config, Rng(config.seed))
        for name, target in _state_arrays(net).items():
            stored = z[name]
            if stored.shape != target.shape:
                raise ValueError(f"checkpoint array {name} has shape "
                                 f"{stored.shape}, expected {target.shape}")
            target[...] = stored
        for bn, flag in zip(net.bn_records(), meta["bn_initialized"]):
            bn.initialized = bool(flag)
    return net, meta["extra"]
