import numpy as np
import numpy.testing as npt
import pytest

from mtlsar.data import SyntheticSpec, generate_chip, stack_samples
from mtlsar.network import MtlNetwork, NetworkConfig
from mtlsar.tensor import Rng
from mtlsar.train import EpochLogWriter, SgdState, sgd_step, train_epoch


def tiny_setup(seed=0, n_per_class=4):
    spec = SyntheticSpec(num_classes=2, chip_size=16, geometry_scale=0.3,
                         center_jitter=1.0)
    rng = Rng(seed)
    samples = [generate_chip(spec, c, rng.derive(c, k))
               for c in range(2) for k in range(n_per_class)]
    cfg = NetworkConfig(input_hw=(16, 16), num_classes=2,
                        encoder_channels=(4, 8, 8), encoder_kernels=(3, 3, 3),
                        rec_channels=8, batch_size=4, lr=0.02,
                        lr_decay_period=100, weight_std=0.1, seed=seed)
    net = MtlNetwork(cfg, Rng(seed).derive(1))
    return cfg, net, stack_samples(samples)


def test_lr_schedule():
    state = SgdState(lr0=0.001, decay=0.1, period=5)
    lrs = []
    for epoch in range(15):
        state.epoch = epoch
        lrs.append(state.lr)
    npt.assert_allclose(lrs[0:5], 0.001)
    npt.assert_allclose(lrs[5:10], 1e-4)
    npt.assert_allclose(lrs[10:15], 1e-5)


def test_sgd_step_update_value():
    w = np.array([1.0])
    g = np.array([0.5])
    sgd_step([w], [g], SgdState(lr0=0.001))
    npt.assert_allclose(w, [0.9995], rtol=0, atol=1e-15)


def test_sgd_step_zero_lr_equivalent():
    state = SgdState(lr0=1e-30)
    w = np.array([1.0, -2.0])
    before = w.copy()
    sgd_step([w], [np.array([5.0, 5.0])], state)
    npt.assert_allclose(w, before, atol=1e-25)


def test_sgd_step_shape_mismatch():
    with pytest.raises(ValueError):
        sgd_step([np.ones(3)], [np.ones(4)], SgdState())


def test_train_epoch_determinism():
    results = []
    for _ in range(2):
        cfg, net, (images, labels, masks) = tiny_setup(seed=5)
        state = SgdState(lr0=cfg.lr, period=cfg.lr_decay_period)
        summaries = [train_epoch(net, images, labels, masks, state,
                                 Rng(5).derive(3, e)) for e in range(2)]
        results.append([(s.loss, s.rec_loss, s.seg_loss, s.train_acc)
                        for s in summaries])
    assert results[0] == results[1]


def test_train_epoch_zero_weights_leave_params_unchanged():
    cfg, net, (images, labels, masks) = tiny_setup(seed=6)
    net.config.lambda_rec = 0.0
    net.config.lambda_seg = 0.0
    _, values, _ = net.parameters()
    before = [v.copy() for v in values]
    train_epoch(net, images, labels, masks,
                SgdState(lr0=cfg.lr, period=cfg.lr_decay_period), Rng(0))
    for b, v in zip(before, values):
        npt.assert_array_equal(b, v)


def test_train_epoch_loss_decreases():
    cfg, net, (images, labels, masks) = tiny_setup(seed=7)
    state = SgdState(lr0=cfg.lr, period=cfg.lr_decay_period)
    losses = [train_epoch(net, images, labels, masks, state,
                          Rng(7).derive(3, e)).loss for e in range(3)]
    assert losses[1] < losses[0]
    assert losses[2] < losses[1]


def test_train_epoch_empty_dataset():
    cfg, net, (images, labels, masks) = tiny_setup()
    with pytest.raises(ValueError):
        train_epoch(net, images[:0], labels[:0], masks[:0], SgdState(), Rng(0))


def test_train_epoch_advances_epoch_counter():
    cfg, net, (images, labels, masks) = tiny_setup(seed=8)
    state = SgdState(lr0=cfg.lr, period=cfg.lr_decay_period)
    s = train_epoch(net, images, labels, masks, state, Rng(8))
    assert s.epoch == 0
    assert state.epoch == 1


def test_epoch_log_writer(tmp_path):
    log = EpochLogWriter(tmp_path)
    cfg, net, (images, labels, masks) = tiny_setup(seed=9)
    state = SgdState(lr0=cfg.lr, period=cfg.lr_decay_period)
    log.append(train_epoch(net, images, labels, masks, state, Rng(9)))
    lines = (tmp_path / "train_log.csv").read_text().strip().splitlines()
    assert lines[0] == "epoch,lr,loss,rec_loss,seg_loss,train_acc"
    assert len(lines) == 2
    timing = (tmp_path / "timing.csv").read_text().strip().splitlines()
    assert timing[0] == "epoch,seconds"
    assert len(timing) == 2
