import numpy as np
import numpy.testing as npt
import pytest

from mtlsar import losses
from mtlsar.network import (MtlNetwork, NetworkConfig, load_checkpoint,
                            save_checkpoint)
from mtlsar.tensor import Rng


MINI = dict(input_hw=(16, 16), num_classes=3, encoder_channels=(4, 8, 8),
            encoder_kernels=(3, 3, 3), rec_channels=8, weight_std=0.1, seed=7)


def mini_net(seed=7):
    cfg = NetworkConfig(**MINI)
    return cfg, MtlNetwork(cfg, Rng(seed))


def test_config_rejects_bad_input_size():
    with pytest.raises(ValueError):
        NetworkConfig(input_hw=(20, 20))


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        NetworkConfig.from_dict({"not_a_key": 1})


def test_config_decoder_mirrors_encoder():
    cfg = NetworkConfig(encoder_channels=(16, 32, 64))
    assert cfg.decoder_channels == (64, 32, 16)


def test_build_deterministic():
    _, a = mini_net()
    _, b = mini_net()
    for va, vb in zip(a.parameters()[1], b.parameters()[1]):
        npt.assert_array_equal(va, vb)


def test_build_zero_std_gives_zero_kernels():
    cfg = NetworkConfig(**{**MINI, "weight_std": 0.0})
    net = MtlNetwork(cfg, Rng(0))
    npt.assert_array_equal(net.enc_conv[0].w, 0.0)
    npt.assert_array_equal(net.seg_tconv[0].w, 0.0)
    npt.assert_allclose(net.enc_conv[0].b, 0.1)


def test_parameter_count_closed_form():
    cfg = NetworkConfig(**MINI)
    net = MtlNetwork(cfg, Rng(0))
    c1, c2, c3 = cfg.encoder_channels
    k1, k2, k3 = cfg.encoder_kernels
    d1, d2, d3 = cfg.decoder_channels
    r, rk, dk, uk = cfg.rec_channels, cfg.rec_kernel, cfg.decoder_kernel, cfg.up_kernel
    C, V, ic = cfg.num_classes, cfg.num_seg_classes, cfg.in_channels
    expected = 0
    # encoder: bn(gamma+beta) + conv(w+b) per stage
    for cin, cout, k in ((ic, c1, k1), (c1, c2, k2), (c2, c3, k3)):
        expected += 2 * cin + cout * cin * k * k + cout
    # recognition head
    expected += 2 * c3 + r * c3 * rk * rk + r
    expected += 2 * r + C * r + C
    # segmentation decoder
    for tin, tout, cin in ((c3, d1, d1 + c3), (d1, d2, d2 + c2), (d2, d3, d3 + c1)):
        expected += tin * tout * uk * uk + tout          # tconv
        expected += 2 * cin + (tout * cin * dk * dk) + tout   # bn + fusion conv
    expected += 2 * d3 + V * d3 + V                      # bn + 1x1 out conv
    assert net.num_parameters() == expected


def test_forward_shapes_and_probability_rows():
    cfg = NetworkConfig(num_classes=10)
    net = MtlNetwork(cfg, Rng(0))
    x = Rng(1).uniform(0, 1, (2, 1, 88, 88))
    probs, seg_logits, _ = net.forward(x, "train")
    assert probs.shape == (2, 10)
    assert seg_logits.shape == (2, 2, 88, 88)
    npt.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.isfinite(probs).all() and np.isfinite(seg_logits).all()


def test_forward_zero_input_finite():
    _, net = mini_net()
    probs, seg_logits, _ = net.forward(np.zeros((2, 1, 16, 16)), "train")
    assert np.isfinite(probs).all() and np.isfinite(seg_logits).all()


def test_encoder_spatial_sizes():
    cfg = NetworkConfig()
    net = MtlNetwork(cfg, Rng(0))
    assert net.encoder_sizes == [(88, 88), (44, 44), (22, 22), (11, 11)]
    _, feats, _ = net.encoder_forward(Rng(1).uniform(0, 1, (1, 1, 88, 88)))
    assert [f.shape[2:] for f in feats] == [(88, 88), (44, 44), (22, 22)]


def test_shared_encoder_consistency():
    _, net = mini_net()
    x = Rng(2).uniform(0, 1, (2, 1, 16, 16))
    # run encoder once, feed both heads, and compare against the joint pass
    probs_joint, seg_joint, _ = net.forward(x, "train")
    trunk, feats, _ = net.encoder_forward(x, "train")
    probs_split, _, _ = net.recognition_forward(trunk, "train")
    seg_split, _ = net.segmentation_forward(trunk, feats, "train")
    npt.assert_array_equal(probs_joint, probs_split)
    npt.assert_array_equal(seg_joint, seg_split)


def test_eval_mode_batch_size_independent():
    _, net = mini_net()
    x = Rng(3).uniform(0, 1, (6, 1, 16, 16))
    net.forward(x, "train")   # initialize running stats
    probs_full, seg_full, _ = net.forward(x, "eval")
    for i in range(6):
        p1, s1, _ = net.forward(x[i : i + 1], "eval")
        # GEMM blocking differs across batch shapes: agreement to 1e-12,
        # not bitwise
        npt.assert_allclose(p1[0], probs_full[i], rtol=0, atol=1e-12)
        npt.assert_allclose(s1[0], seg_full[i], rtol=0, atol=1e-12)


def test_eval_before_train_raises():
    _, net = mini_net()
    with pytest.raises(RuntimeError, match="uninitialized"):
        net.forward(np.zeros((1, 1, 16, 16)), "eval")


def test_backward_zero_lambda_seg_matches_recognition_only():
    x = Rng(4).uniform(0, 1, (2, 1, 16, 16))
    labels = np.array([0, 2])

    _, net_a = mini_net()
    probs, seg_logits, caches = net_a.forward(x, "train")
    _, d_rec = losses.recognition_loss(probs, labels)
    net_a.backward(caches, d_rec, 0.0 * seg_logits)

    _, net_b = mini_net()
    probs_b, _, caches_b = net_b.forward(x, "train")
    _, d_rec_b = losses.recognition_loss(probs_b, labels)
    net_b.backward(caches_b, d_rec_b, None)

    for name, rec in net_a.named_params():
        other = dict(net_b.named_params())[name]
        for (fa, va, ga), (fb, vb, gb) in zip(rec.param_items(), other.param_items()):
            if name.startswith("seg."):
                continue   # decoder grads differ (zero vs untouched) by design
            npt.assert_allclose(ga, gb, atol=1e-15)


def test_backward_zero_everything_gives_zero_grads():
    _, net = mini_net()
    x = Rng(5).uniform(0, 1, (2, 1, 16, 16))
    probs, seg_logits, caches = net.forward(x, "train")
    net.backward(caches, np.zeros_like(probs), np.zeros_like(seg_logits))
    _, _, grads = net.parameters()
    for g in grads:
        npt.assert_array_equal(g, 0.0)


def test_backward_returns_input_delta_shape():
    _, net = mini_net()
    x = Rng(6).uniform(0, 1, (2, 1, 16, 16))
    probs, seg_logits, caches = net.forward(x, "train")
    _, d_rec = losses.recognition_loss(probs, np.array([0, 1]))
    _, d_seg = losses.segmentation_loss(seg_logits, np.zeros((2, 16, 16), dtype=int))
    d_in = net.backward(caches, d_rec, d_seg)
    assert d_in.shape == x.shape


def test_checkpoint_round_trip_bit_exact(tmp_path):
    cfg, net = mini_net()
    x = Rng(7).uniform(0, 1, (4, 1, 16, 16))
    net.forward(x, "train")   # give the BNs real running stats
    path = tmp_path / "net.npz"
    save_checkpoint(net, path, extra={"epoch": 3})
    loaded, extra = load_checkpoint(path)
    assert extra == {"epoch": 3}
    na, va, _ = net.parameters()
    nb, vb, _ = loaded.parameters()
    assert na == nb
    for a, b in zip(va, vb):
        npt.assert_array_equal(a, b)
    for bn_a, bn_b in zip(net.bn_records(), loaded.bn_records()):
        npt.assert_array_equal(bn_a.running_mean, bn_b.running_mean)
        npt.assert_array_equal(bn_a.running_var, bn_b.running_var)
        assert bn_a.initialized == bn_b.initialized
    pa, sa, _ = net.forward(x, "eval")
    pb, sb, _ = loaded.forward(x, "eval")
    npt.assert_array_equal(pa, pb)
    npt.assert_array_equal(sa, sb)


def test_checkpoint_bytes_deterministic(tmp_path):
    _, net = mini_net()
    net.forward(Rng(8).uniform(0, 1, (2, 1, 16, 16)), "train")
    p1, p2 = tmp_path / "a.npz", tmp_path / "b.npz"
    save_checkpoint(net, p1, extra={"epoch": 1})
    save_checkpoint(net, p2, extra={"epoch": 1})
    assert p1.read_bytes() == p2.read_bytes()
