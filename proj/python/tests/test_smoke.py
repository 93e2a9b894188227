import math

import numpy as np
import pytest

import c4net

TINY = """
encoder_channels = 4, 4, 8, 8, 8
input_size = 32
cf = 4
attention_reduction = 2
pyramid_sizes = 1, 2
epochs = 2
batch_size = 4
"""


def test_generate_dataset():
    samples = c4net.generate_dataset(4, 32, seed=3)
    assert [s["id"] for s in samples] == [f"toy_{i:05d}" for i in range(4)]
    assert samples[0]["image"].shape == (3, 32, 32)
    assert samples[0]["mask"].shape == (32, 32)
    assert set(np.unique(samples[0]["mask"])) <= {0.0, 1.0}
    again = c4net.generate_dataset(4, 32, seed=3)
    assert np.array_equal(samples[2]["image"], again[2]["image"])


def test_loss_identities():
    gt = np.zeros((8, 8))
    gt[2:6, 3:7] = 1
    assert c4net.wbce(gt, gt) <= 2e-7
    assert c4net.wiou(gt, gt) == 0.0
    assert c4net.wel(gt, gt) == 0.0
    s = np.array([[0.8, 0.4], [0.2, 0.0]])
    g = np.array([[1.0, 0.0], [0.0, 0.0]])
    assert abs(c4net.wel(s, g, np.ones((2, 2))) - 3 / 7) <= 1e-12
    w = c4net.weight_map(gt)
    assert w.shape == (1, 1, 8, 8)
    assert w.min() >= 1.0


def test_loss_shape_mismatch():
    with pytest.raises(ValueError):
        c4net.wbce(np.zeros((4, 4)), np.zeros((4, 5)))


def test_metrics_match_hand_values():
    gt = np.array([[1.0, 0.0], [0.0, 0.0]])
    pred = np.array([[0.9, 0.6], [0.1, 0.0]])
    r = c4net.evaluate([pred], [gt])
    assert math.isclose(r["mae"], (0.1 + 0.6 + 0.1) / 4, rel_tol=0, abs_tol=1e-15)
    assert math.isclose(r["mfp"], 0.25, abs_tol=1e-15)
    assert r["mfn"] == 0.0
    assert r["precision"].shape == (256,)
    assert np.all(np.diff(r["recall"]) <= 0)


def test_gradcheck():
    units = c4net.gradcheck_units()
    assert "wel" in units and "model" in units
    r = c4net.gradcheck("conv2d", 0)
    assert r["pass"] and r["checked"] > 0
    with pytest.raises(ValueError):
        c4net.gradcheck("no_such_unit")


def test_config_round_trip():
    text = c4net.normalize_config(TINY)
    assert "cf = 4" in text
    assert c4net.normalize_config(text) == text
    with pytest.raises(ValueError):
        c4net.normalize_config("bogus_key = 1")


def test_model_train_predict_checkpoint(tmp_path):
    data = c4net.generate_dataset(10, 32, seed=1)
    model = c4net.Model(TINY, seed=2)
    assert model.parameter_count > 0
    log = model.train(data[:8], data[8:], seed=2)
    assert [e["epoch"] for e in log] == [1, 2]
    assert all(math.isfinite(e["loss"]) for e in log)

    images = np.stack([s["image"] for s in data[8:]])
    pred = model.predict(images)
    assert pred.shape == (2, 1, 32, 32)
    assert np.all((pred > 0) & (pred < 1))
    report = model.evaluate(data[8:])
    assert 0.0 <= report["mae"] <= 1.0

    path = str(tmp_path / "m.c4nt")
    model.save(path)
    other = c4net.Model(TINY, seed=99)
    other.load(path)
    assert np.array_equal(other.predict(images), pred)


def test_training_is_deterministic():
    data = c4net.generate_dataset(8, 32, seed=4)
    a = c4net.Model(TINY, seed=5)
    b = c4net.Model(TINY, seed=5)
    la, lb = a.train(data, seed=6), b.train(data, seed=6)
    assert [e["loss"] for e in la] == [e["loss"] for e in lb]
    images = np.stack([s["image"] for s in data])
    assert np.array_equal(a.predict(images), b.predict(images))
