import numpy as np
import numpy.testing as npt
import pytest

from mtlsar.tensor import Rng, center_crop, gaussian_fill, inner_product, zero_pad


def test_zero_pad_identity():
    t = Rng(0).normal(0, 1, (2, 3, 4, 5))
    out = zero_pad(t, 0)
    npt.assert_array_equal(out, t)


def test_zero_pad_single_element():
    t = np.full((1, 1, 1, 1), 5.0)
    out = zero_pad(t, 1)
    assert out.shape == (1, 1, 3, 3)
    assert out[0, 0, 1, 1] == 5.0
    assert out.sum() == 5.0


def test_zero_pad_matches_loop_oracle():
    t = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
    out = zero_pad(t, 1)
    assert out.shape == (1, 1, 4, 4)
    expected = np.zeros((1, 1, 4, 4))
    for y in range(2):
        for x in range(2):
            expected[0, 0, y + 1, x + 1] = t[0, 0, y, x]
    npt.assert_array_equal(out, expected)


def test_pad_crop_round_trip():
    rng = Rng(1)
    for pad in (1, 2, 5):
        t = rng.normal(0, 1, (2, 2, 6, 7))
        npt.assert_array_equal(center_crop(zero_pad(t, pad), pad), t)


def test_flatten_reshape_identity():
    t = Rng(2).normal(0, 1, (3, 2, 4, 4))
    npt.assert_array_equal(t.reshape(-1).reshape(t.shape), t)


def test_gaussian_fill_degenerate_std():
    out = gaussian_fill((2, 3), 1.5, 0.0, Rng(0))
    npt.assert_array_equal(out, np.full((2, 3), 1.5))


def test_gaussian_fill_statistics():
    out = gaussian_fill((100000,), 0.0, 0.01, Rng(42))
    assert abs(out.mean()) < 1e-3
    assert abs(out.std() - 0.01) < 0.05 * 0.01


def test_gaussian_fill_deterministic():
    a = gaussian_fill((4, 4), 0.0, 1.0, Rng(7))
    b = gaussian_fill((4, 4), 0.0, 1.0, Rng(7))
    npt.assert_array_equal(a, b)


def test_rng_stream_reproducible():
    a = Rng(123).uniform(0, 1, 10000)
    b = Rng(123).uniform(0, 1, 10000)
    npt.assert_array_equal(a, b)


def test_rng_derive_independent_of_parent_use():
    r1 = Rng(5)
    r1.normal(0, 1, 100)       # consume the parent stream
    r2 = Rng(5)
    npt.assert_array_equal(r1.derive(3).uniform(0, 1, 8),
                           r2.derive(3).uniform(0, 1, 8))


def test_inner_product_ones():
    a = np.ones(4)
    assert inner_product(a, a) == 4.0


def test_inner_product_orthogonal():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([0.0, 1.0, 0.0])
    assert inner_product(a, b) == 0.0


def test_inner_product_matches_loop():
    rng = Rng(3)
    a = rng.normal(0, 1, 8)
    b = rng.normal(0, 1, 8)
    manual = sum(float(a[i]) * float(b[i]) for i in range(8))
    assert abs(inner_product(a, b) - manual) < 1e-12


def test_inner_product_shape_mismatch():
    with pytest.raises(ValueError):
        inner_product(np.ones(3), np.ones(4))
