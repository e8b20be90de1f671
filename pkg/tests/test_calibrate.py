import math

import numpy as np
import pytest

from casmlab import nets
from casmlab.casme import ScoreConfig, TrainConfig, accuracy, pretrain_classifier
from casmlab.casme import calibrate as cal
from casmlab.data import ShapesConfig, gen_shapes

NET = nets.NetConfig(input_size=16, channels=[4, 8], num_classes=3, tap_channels=4)


@pytest.fixture(scope="module")
def probe_setup():
    ds = gen_shapes(ShapesConfig(height=16, width=16, num_classes=3, scale_range=(0.4, 0.8),
                                 train_per_class=20, val_per_class=5), 1)
    train = ds.split("train")
    f0 = pretrain_classifier(NET, train.images, train.labels, 60, 0, lr=0.01)
    assert accuracy(f0, train.images, train.labels, NET) > 1 / 3
    cfg = TrainConfig(iterations=300, batch_size=16, lr_m=0.01, seed=0)
    return cfg, train, f0, ds.split("val").images


def test_probe_extremes_and_monotone_sweep(probe_setup):
    cfg, train, f0, held_out = probe_setup
    grid = [0.0, 0.5, 2.0, 8.0, 100.0]
    cov = [cal.probe_coverage(lam, cfg, ScoreConfig(), NET, train.images, train.labels, f0, held_out) for lam in grid]
    assert cov[0] >= 0.9
    assert cov[-1] <= 0.1
    assert all(b <= a + 0.05 for a, b in zip(cov, cov[1:]))


def _fake_probe(fn, calls):
    def probe(lam, *args):
        calls.append(lam)
        return fn(lam)
    return probe


def test_bisection_converges(monkeypatch):
    calls = []
    monkeypatch.setattr(cal, "probe_coverage", _fake_probe(lambda lam: math.exp(-lam), calls))
    res = cal.calibrate_lambda(None, ScoreConfig(), NET, None, None, None, None, target=0.5, tolerance=0.01,
                               low=0.0, high=8.0, max_probes=20)
    assert res.converged
    assert abs(res.coverage - 0.5) <= 0.01
    assert abs(res.lambda_r - math.log(2)) < 0.05
    assert [p[0] for p in res.probes] == calls
    assert calls[:2] == [0.0, 8.0]


def test_bisection_is_geometric_above_zero(monkeypatch):
    calls = []
    monkeypatch.setattr(cal, "probe_coverage", _fake_probe(lambda lam: 1 / (1 + lam), calls))
    cal.calibrate_lambda(None, ScoreConfig(), NET, None, None, None, None, target=0.5, tolerance=0.001,
                         low=0.25, high=16.0, max_probes=3)
    assert calls[2] == pytest.approx(2.0)


def test_unbracketed_target_returns_boundary(monkeypatch, caplog):
    monkeypatch.setattr(cal, "probe_coverage", _fake_probe(lambda lam: 0.9, []))
    res = cal.calibrate_lambda(None, ScoreConfig(), NET, None, None, None, None, target=0.5, high=8.0)
    assert not res.converged and res.lambda_r == 8.0
    assert "failed to bracket" in caplog.text


def test_budget_exhaustion_returns_best_probe(monkeypatch):
    monkeypatch.setattr(cal, "probe_coverage", _fake_probe(lambda lam: 1.0 if lam < 1 else 0.0, []))
    res = cal.calibrate_lambda(None, ScoreConfig(), NET, None, None, None, None, target=0.5, tolerance=0.1,
                               max_probes=4)
    assert not res.converged
    assert len(res.probes) == 4
    assert res.to_dict()["lambda_r"] == res.lambda_r
