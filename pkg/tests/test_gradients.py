"""Finite-difference verification at unit-test scale; the acceptance suite
re-runs these at the mandated 20-instance depth."""

import numpy as np

from mtlsar import gradcheck


def test_each_layer_type_matches_finite_differences():
    report = gradcheck.check_layers(seed=0, cases=5)
    assert set(report) == {"conv", "tconv", "batchnorm", "relu", "maxpool",
                           "recognition_loss", "segmentation_loss"}
    for name, err in report.items():
        assert err < 1e-4, (name, err)


def test_loss_gradients_tight_tolerance():
    from mtlsar.tensor import Rng
    rng = Rng(1)
    for trial in range(5):
        assert gradcheck.check_recognition_loss(rng.derive(trial)) < 1e-6
        assert gradcheck.check_segmentation_loss(rng.derive(trial, 1)) < 1e-6


def test_whole_network_gradient():
    err, per_param = gradcheck.check_network(seed=1)
    assert err < 1e-4, sorted(per_param.items(), key=lambda kv: -kv[1])[:3]


def test_numerical_gradient_on_quadratic():
    x = np.array([1.0, -2.0, 3.0])
    g = gradcheck.numerical_gradient(lambda: float((x ** 2).sum()), x)
    np.testing.assert_allclose(g, 2 * x, atol=1e-8)


def test_rel_error_behaviour():
    a = np.array([1.0, 0.0])
    assert gradcheck.rel_error(a, a) == 0.0
    assert gradcheck.rel_error(np.array([1.0]), np.array([2.0])) == 0.5


def test_verification_report_shape():
    result = gradcheck.run_verification(seed=0, cases=2)
    assert result["passed"]
    assert result["max_error"] < result["tolerance"]
    assert "network" in result and "layers" in result
