import numpy as np
import numpy.testing as npt
import pytest

from mtlsar.losses import (LossValue, joint_loss, recognition_loss,
                           segmentation_loss)
from mtlsar.layers import softmax
from mtlsar.tensor import Rng


def test_recognition_perfect_prediction():
    probs = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    loss, d = recognition_loss(probs, np.array([0, 2]))
    assert loss == 0.0
    npt.assert_array_equal(d, 0.0)


def test_recognition_uniform_is_log_c():
    probs = np.full((5, 10), 0.1)
    loss, _ = recognition_loss(probs, np.zeros(5, dtype=int))
    assert abs(loss - np.log(10.0)) < 1e-12


def test_recognition_accepts_one_hot():
    probs = softmax(Rng(0).normal(0, 1, (4, 3)))
    idx = np.array([2, 0, 1, 1])
    one_hot = np.eye(3)[idx]
    l1, d1 = recognition_loss(probs, idx)
    l2, d2 = recognition_loss(probs, one_hot)
    assert l1 == l2
    npt.assert_array_equal(d1, d2)


def test_recognition_gradient_rows_sum_to_zero():
    probs = softmax(Rng(1).normal(0, 2, (6, 4)))
    _, d = recognition_loss(probs, np.array([0, 1, 2, 3, 0, 1]))
    npt.assert_allclose(d.sum(axis=1), 0.0, atol=1e-15)


def test_recognition_label_out_of_range():
    with pytest.raises(ValueError):
        recognition_loss(np.full((1, 3), 1 / 3), np.array([3]))


def test_segmentation_perfect_prediction():
    logits = np.zeros((1, 2, 4, 4))
    logits[0, 1] = 50.0   # saturated toward class 1
    masks = np.ones((1, 4, 4), dtype=int)
    loss, _ = segmentation_loss(logits, masks)
    assert loss < 1e-12


def test_segmentation_uniform_is_log_v_for_any_size():
    for h, w in ((2, 2), (4, 8), (16, 16)):
        logits = np.zeros((3, 2, h, w))
        masks = Rng(2).integers(0, 2, (3, h, w))
        loss, _ = segmentation_loss(logits, masks)
        assert abs(loss - np.log(2.0)) < 1e-12


def test_segmentation_hand_computed_2x2():
    logits = np.array([[[[1.0, -1.0], [0.5, 2.0]],
                        [[0.0, 1.0], [-0.5, 0.0]]]])
    masks = np.array([[[0, 1], [1, 0]]])
    manual = 0.0
    for y in range(2):
        for x in range(2):
            z = logits[0, :, y, x]
            p = np.exp(z - z.max())
            p /= p.sum()
            manual += -np.log(p[masks[0, y, x]])
    manual /= 4.0
    loss, _ = segmentation_loss(logits, masks)
    assert abs(loss - manual) < 1e-12


def test_segmentation_gradient_scales_inverse_pixels():
    rng = Rng(3)
    logits = rng.normal(0, 1, (1, 2, 4, 4))
    masks = rng.integers(0, 2, (1, 4, 4))
    _, d_small = segmentation_loss(logits, masks)
    big = np.repeat(np.repeat(logits, 2, axis=2), 2, axis=3)
    big_masks = np.repeat(np.repeat(masks, 2, axis=1), 2, axis=2)
    _, d_big = segmentation_loss(big, big_masks)
    # replicated content: per-pixel gradient divides by 4 when h and w double
    npt.assert_allclose(d_big[0, :, ::2, ::2], d_small[0] / 4.0, atol=1e-15)


def test_segmentation_mask_out_of_range():
    with pytest.raises(ValueError):
        segmentation_loss(np.zeros((1, 2, 2, 2)), np.full((1, 2, 2), 2))


def test_segmentation_loss_nonnegative():
    rng = Rng(4)
    for trial in range(10):
        logits = rng.derive(trial).normal(0, 3, (2, 3, 5, 5))
        masks = rng.derive(trial, 1).integers(0, 3, (2, 5, 5))
        loss, _ = segmentation_loss(logits, masks)
        assert loss >= 0.0


def test_joint_loss_paper_sum():
    assert joint_loss(2.0, 0.5, 1.0, 1.0) == 2.5


def test_joint_loss_ablations():
    assert joint_loss(1.7, 0.9, 1.0, 0.0) == 1.7
    assert abs(joint_loss(1.7, 0.3, 0.0, 2.0) - 0.6) < 1e-15


def test_joint_loss_rejects_negative_weights():
    with pytest.raises(ValueError):
        joint_loss(1.0, 1.0, -0.1, 1.0)


def test_loss_value_total():
    lv = LossValue(rec=2.0, seg=0.5, lambda_rec=1.0, lambda_seg=1.0)
    assert lv.total == 2.5
