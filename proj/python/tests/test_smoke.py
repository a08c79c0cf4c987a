import math

import numpy as np
import pytest

import hbnn


def test_space_round_trip():
    for model in ("poincare", "lorentz"):
        sp = hbnn.Space(model, k=-1.0, n=3)
        x = sp.exp(sp.origin(), np.array([0.3, -0.2, 0.1] if model == "poincare" else [0.0, 0.3, -0.2, 0.1]))
        assert sp.contains(x)
        y = sp.exp(x, sp.log(x, sp.origin()))
        np.testing.assert_allclose(y, sp.origin(), atol=1e-12)


def test_isometry_between_models():
    ball = hbnn.Space("poincare", -1.0, 2)
    hyp = hbnn.Space("lorentz", -1.0, 2)
    p, q = np.array([0.1, 0.5]), np.array([-0.3, 0.2])
    assert ball.distance(p, q) == pytest.approx(hyp.distance(hbnn.to_lorentz(-1.0, p), hbnn.to_lorentz(-1.0, q)))


def test_busemann_matches_ray_oracle():
    sp = hbnn.Space("poincare", -1.0, 2)
    v = np.array([1.0, 0.0])
    x = np.array([0.2, 0.4])
    assert hbnn.busemann(sp, v, x) == pytest.approx(hbnn.busemann_ray_oracle(sp, v, x, 20.0), abs=1e-6)
    # |grad B|_x = 1 with the conformal metric lambda_x^2 <.,.>
    g = hbnn.busemann_gradient(sp, v, x)
    lam = 2.0 / (1.0 - x @ x)
    assert lam * np.linalg.norm(g) == pytest.approx(1.0)


def test_gyro_identity():
    sp = hbnn.Space("poincare", -1.0, 2)
    x = np.array([0.3, -0.4])
    np.testing.assert_allclose(hbnn.gyro_add(sp, sp.origin(), x), x, atol=1e-15)
    np.testing.assert_allclose(hbnn.gyro_scalar(sp, 1.0, x), x, atol=1e-15)


def test_feasibility_worked_case():
    f = hbnn.bfc_horosphere_feasibility(np.array([1.0, 1.0]), -1.0, "poincare")
    assert f["discriminant"] == pytest.approx(2 * math.exp(-2) - 1, abs=1e-9)
    assert hbnn.bfc_horosphere_feasibility(np.zeros(2))["discriminant"] == pytest.approx(1.0)


def test_cost_tables():
    assert hbnn.param_count("bmlr-p", 512, 1000) == 514000
    assert hbnn.param_count("ganea-mlr", 512, 100) == 102400
    assert hbnn.flop_count("euclidean-mlr", 512, 10) == 10240
    assert "bmlr-l" in hbnn.layer_kinds()


def test_layer_forward_matches_reference():
    layer = hbnn.Layer("bmlr-l", in_dim=3, out_dim=4, k=-0.5, seed=2)
    sp = hbnn.Space("lorentz", -0.5, 3)
    rows = np.stack([sp.project(np.array([0.0, 0.2 * i, -0.1, 0.3])) for i in range(5)])
    out = layer.forward(rows)
    assert out.shape == (5, 4)
    for i in range(5):
        np.testing.assert_allclose(out[i], layer.reference(rows[i]), atol=1e-10)
    assert set(layer.params()) >= {"b"}


def test_network_trains_on_blobs(tmp_path):
    x, y = hbnn.make_blobs(seed=3)
    assert x.shape == (200, 2)
    net = hbnn.Network("bmlr-p", features=2, classes=2, seed=1)
    history = net.fit(x, y, epochs=30)
    assert len(history) == 30
    assert history[-1]["accuracy"] >= 0.99
    metrics = net.evaluate(x, y)
    assert metrics["accuracy"] >= 0.99 and metrics["auc"] is not None
    path = str(tmp_path / "m.hbnn")
    net.save(path)
    np.testing.assert_array_equal(hbnn.Network.load(path).logits(x), net.logits(x))


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        hbnn.Space("klein", -1.0, 2)
    with pytest.raises(ValueError):
        hbnn.Space("poincare", 0.5, 2)
    with pytest.raises(ValueError):
        hbnn.verify("bogus")
    net = hbnn.Network("bmlr-p", features=2, classes=2)
    with pytest.raises(ValueError):
        net.logits(np.zeros((3, 5)))


def test_verify_suite_passes():
    results = hbnn.verify("busemann")
    assert results and all(r["passed"] for r in results)
