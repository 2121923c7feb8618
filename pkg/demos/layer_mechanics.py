"""Walk through the individual layers: forward shapes, backward deltas,
and the adjoint identity tying convolution to transposed convolution."""

import numpy as np

from mtlsar import (BNParams, ConvParams, TransposedConvParams, Rng,
                    bn_forward, conv_backward, conv_forward, inner_product,
                    maxpool_backward, maxpool_forward, relu_forward, softmax,
                    tconv_forward)

rng = Rng(7)

# A toy feature map: batch 1, one channel, 8x8
x = rng.uniform(0, 1, (1, 1, 8, 8))

# -- convolution: 3x3 kernel, same padding -----------------------------------
conv = ConvParams.init(in_ch=1, out_ch=4, k=3, rng=rng.derive(0), pad=1,
                       weight_std=0.3)
y, cache = conv_forward(x, conv)
print("conv 1->4 channels, same padding:", x.shape, "->", y.shape)

# the backward pass routes a delta back to the input and fills gradients
delta = rng.normal(0, 1, y.shape)
dx = conv_backward(delta, cache, conv)
print("backward delta:", delta.shape, "->", dx.shape,
      "| grad_w", conv.grad_w.shape, "grad_b", conv.grad_b.shape)

# -- max pooling halves the grid, and only argmax cells get gradient ---------
p, idx = maxpool_forward(y)
print("2x2 max pool:", y.shape, "->", p.shape)
dp = maxpool_backward(np.ones_like(p), idx)
print("pool routes one unit per window: nonzero =", int((dp != 0).sum()),
      "of", dp.size)

# -- batch normalization: per-channel standardization -------------------------
bn = BNParams(channels=4)
z, _ = bn_forward(y, bn, "train")
print("bn train-mode per-channel means:", np.round(z.mean(axis=(0, 2, 3)), 12))

# -- relu and softmax ----------------------------------------------------------
r, _ = relu_forward(z)
print("relu zeros out", int((r == 0).sum()), "of", r.size, "units")
print("softmax of (0, ln 2):", softmax(np.array([0.0, np.log(2.0)])),
      "(thirds, by construction)")

# -- transposed convolution is the exact adjoint of a strided convolution -----
ci, co = 2, 3
w = rng.normal(0, 1, (co, ci, 2, 2))
a = rng.normal(0, 1, (1, ci, 6, 6))
conv2 = ConvParams(w, np.zeros(co), stride=2)
ya, _ = conv_forward(a, conv2)
b = rng.normal(0, 1, ya.shape)
tconv = TransposedConvParams(w, np.zeros(ci), up=2)
ab, _ = tconv_forward(b, tconv)
print("adjoint identity <conv(a), b> vs <a, tconv(b)>:",
      inner_product(ya, b), "vs", inner_product(a, ab))
