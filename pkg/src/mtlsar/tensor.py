"""Core array conventions and deterministic random streams.

Feature maps live in numpy float64 arrays with (batch, channel, row, col)
axes, C-contiguous. Every numeric routine in the package assumes this
layout; `require_nchw` is the single checkpoint that enforces it.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


def require_nchw(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    """Validate a (n, c, h, w) float64 feature-map array and return it."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name}: expected 4 axes (n, c, h, w), got shape {x.shape}")
    if any(d < 1 for d in x.shape):
        raise ValueError(f"{name}: all dimensions must be >= 1, got shape {x.shape}")
    if x.dtype != DTYPE:
        raise ValueError(f"{name}: expected float64, got {x.dtype}")
    return x


class Rng:
    """Deterministic random stream, fixed to numpy's PCG64 generator.

    The same seed yields the same stream of draws on every platform and
    every run. Gaussian draws use numpy's ziggurat sampler. Independent
    substreams are derived from (seed, *keys) so that work split across
    items (chips, epochs) produces identical values whether executed
    serially or in parallel.
    """

    def __init__(self, seed: int, _keys: tuple = ()):
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in _keys)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((self.seed,) + self.keys))
        )

    def derive(self, *keys: int) -> "Rng":
        """New independent stream keyed by (seed, *existing keys, *keys)."""
        return Rng(self.seed, self.keys + tuple(keys))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size=size)

    def normal(self, mean: float = 0.0, std: float = 1.0, size=None) -> np.ndarray:
        if std < 0:
            raise ValueError("std must be >= 0")
        if std == 0:
            return np.full(size if size is not None else (), mean, dtype=DTYPE)
        return self._gen.normal(mean, std, size=size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=size)

    def gamma(self, shape_param: float, scale: float, size=None) -> np.ndarray:
        return self._gen.gamma(shape_param, scale, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def zero_pad(t: np.ndarray, pad: int) -> np.ndarray:
    """Pad the two spatial axes of a (n, c, h, w) array with zeros."""
    require_nchw(t)
    if pad < 0:
        raise ValueError("pad must be >= 0")
    if pad == 0:
        return t.copy()
    n, c, h, w = t.shape
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=DTYPE)
    out[:, :, pad : pad + h, pad : pad + w] = t
    return out


def center_crop(t: np.ndarray, pad: int) -> np.ndarray:
    """Inverse of `zero_pad`: drop a border of `pad` pixels on each side."""
    require_nchw(t)
    if pad < 0:
        raise ValueError("pad must be >= 0")
    if pad == 0:
        return t.copy()
    n, c, h, w = t.shape
    if h <= 2 * pad or w <= 2 * pad:
        raise ValueError(f"cannot crop {pad} from spatial size {(h, w)}")
    return t[:, :, pad : h - pad, pad : w - pad].copy()


def gaussian_fill(shape: tuple, mean: float, std: float, rng: Rng) -> np.ndarray:
    """i.i.d. Gaussian array of the given shape drawn from `rng`."""
    if std < 0:
        raise ValueError("std must be >= 0")
    return np.asarray(rng.normal(mean, std, size=shape), dtype=DTYPE).reshape(shape)


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of element-wise products; shapes must match exactly."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))
