import math
import os

import numpy as np
import pytest

from casmlab import nets
from casmlab.autodiff import Tape, Tensor, backward, ops
from casmlab.casme import (
    ClassifierPool,
    ScoreConfig,
    Thinning,
    TrainConfig,
    masked_class_loss,
    mixed_class_loss,
    restore_training_checkpoint,
    score,
    score_from_mask,
    train_baseline,
    train_casme,
)
from casmlab.casme.train import _streams
from casmlab.data import ShapesConfig, gen_shapes
from casmlab.errors import ConfigError, ContractError
from oracles import expected_pool, numeric_grad, rel_error


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _logits(f, x, cfg):
    return nets.classify(f, Tensor(x), cfg, frozen=True).data


@pytest.fixture
def toy(tiny_net):
    cfg = ShapesConfig(height=8, width=8, num_classes=3, scale_range=(0.5, 0.9), train_per_class=8, val_per_class=0)
    ds = gen_shapes(cfg, seed=2)
    f0 = nets.init_params("classifier", tiny_net, 11)
    return ds.images, ds.labels, f0


# losses ------------------------------------------------------------------------------


def test_masked_loss_extremes(tiny_net, rng):
    f = nets.init_params("classifier", tiny_net, 0)
    x = rng.random((4, 3, 8, 8))
    y = rng.integers(0, 3, size=4)
    clean = ops.softmax_cross_entropy(nets.classify(f, Tensor(x), tiny_net), y).item()
    black = ops.softmax_cross_entropy(nets.classify(f, Tensor(np.zeros_like(x)), tiny_net), y).item()
    assert masked_class_loss(f, Tensor(np.zeros((4, 8, 8))), Tensor(x), y, tiny_net).item() == clean
    assert masked_class_loss(f, Tensor(np.ones((4, 8, 8))), Tensor(x), y, tiny_net).item() == black
    assert mixed_class_loss(f, Tensor(np.zeros((4, 8, 8))), Tensor(x), y, tiny_net).item() == clean


def test_masked_loss_matches_per_sample_oracle(tiny_net, rng):
    f = nets.init_params("classifier", tiny_net, 0)
    for _ in range(10):
        x = rng.random((5, 3, 8, 8))
        m = rng.random((5, 8, 8))
        y = rng.integers(0, 3, size=5)
        want = np.mean([-_log_softmax(_logits(f, (x[i] * (1 - m[i]))[None], tiny_net))[0, y[i]] for i in range(5)])
        got = masked_class_loss(f, Tensor(m), Tensor(x), y, tiny_net).item()
        assert abs(got - want) <= 1e-12
        parts = {}
        mixed = mixed_class_loss(f, Tensor(m), Tensor(x), y, tiny_net, parts=parts).item()
        assert mixed == 0.5 * (parts["masked"] + parts["clean"])


def test_mixed_loss_gradient(tiny_net, rng):
    worst = 0.0
    for seed in range(10):
        f = nets.init_params("classifier", tiny_net, seed)
        for t in f.tensors():
            t.data += rng.normal(scale=0.1, size=t.shape)
        x, m = Tensor(rng.random((3, 3, 8, 8))), Tensor(rng.random((3, 8, 8)))
        y = rng.integers(0, 3, size=3)
        with Tape() as tape:
            loss = mixed_class_loss(f, m, x, y, tiny_net)
        backward(loss, tape, wrt=f.tensors())
        for t in f.tensors():
            num = numeric_grad(lambda: mixed_class_loss(f, m, x, y, tiny_net).item(), t.data)
            worst = max(worst, rel_error(t.grad, num))
    assert worst < 1e-5


# score --------------------------------------------------------------------------------


def test_score_uniform_logits_is_log_c(tiny_net, rng):
    f = nets.init_params("classifier", tiny_net, 0)
    f["head.w"].data[...] = 0.0
    f["head.b"].data[...] = 0.0
    x = Tensor(rng.random((4, 3, 8, 8)))
    m = Tensor(rng.random((4, 8, 8)))
    scfg = ScoreConfig(lambda_r=0.0)
    with Tape() as tape:
        s = score_from_mask(f, m, x, np.zeros(4, dtype=int), tiny_net, scfg)
    assert s.item() == pytest.approx(math.log(3), abs=1e-15)
    backward(s, tape, wrt=[m])
    assert not m.grad.any()


def test_score_full_mask_all_gated(tiny_net, rng):
    f = nets.init_params("classifier", tiny_net, 0)
    x = rng.random((4, 3, 8, 8))
    lam = 0.8
    scfg = ScoreConfig(lambda_r=lam, gate_on_disagreement=False)
    got = score_from_mask(f, Tensor(np.ones((4, 8, 8))), Tensor(x), np.zeros(4, dtype=int), tiny_net, scfg).item()
    lp = _log_softmax(_logits(f, np.zeros_like(x), tiny_net))
    h_black = float(np.mean(-(np.exp(lp) * lp).sum(axis=1)))
    assert got == pytest.approx(h_black - lam, abs=1e-12)


def test_score_matches_direct_formula(tiny_net, rng):
    for trial in range(10):
        f = nets.init_params("classifier", tiny_net, trial)
        x = rng.random((6, 3, 8, 8))
        m = rng.random((6, 8, 8))
        y = rng.integers(0, 3, size=6)
        for kind in ("entropy", "classification"):
            scfg = ScoreConfig(score_kind=kind, lambda_r=0.6)
            got = score_from_mask(f, Tensor(m), Tensor(x), y, tiny_net, scfg).item()
            total = 0.0
            for i in range(6):
                lo = _log_softmax(_logits(f, (x[i] * (1 - m[i]))[None], tiny_net))[0]
                lc = _logits(f, x[i][None], tiny_net)[0]
                term = -(np.exp(lo) * lo).sum() if kind == "entropy" else -lo[y[i]]
                gate = float(np.argmax(lc) != np.argmax(lo))
                total += term - 0.6 * gate * m[i].mean()
            assert abs(got - total / 6) <= 1e-12


def test_score_skips_when_no_sample_is_correct(tiny_net, rng):
    f = nets.init_params("classifier", tiny_net, 0)
    m = nets.init_params("mapper", tiny_net, 1, classifier=f)
    x = rng.random((4, 3, 8, 8))
    wrong = (np.argmax(_logits(f, x, tiny_net), axis=1) + 1) % 3
    assert score(m, f, Tensor(x), wrong, tiny_net, ScoreConfig()) is None


def test_score_config_errors():
    with pytest.raises(ConfigError):
        ScoreConfig(score_kind="kl")
    with pytest.raises(ConfigError):
        ScoreConfig(lambda_r=-1)


# pool ----------------------------------------------------------------------------------


def _marker(k):
    from casmlab.autodiff import ParamSet

    return ParamSet({"v": Tensor(np.array([float(k)]))})


def _run_pool(strategy, steps, seed=0):
    rng = np.random.default_rng(seed)
    pool = ClassifierPool.start(strategy, _marker(0))
    history = []
    for k in range(1, steps + 1):
        if strategy.kind != "F":
            pool.insert(k, _marker(k))
        pool.thin(k, rng)
        history.append(pool.indices())
    return history


@pytest.mark.parametrize("text", ["F", "L", "FL", "L10"])
def test_pool_invariants_without_eviction(text):
    strategy = Thinning.parse(text, cap=10**6)
    for k, idx in enumerate(_run_pool(strategy, 5000), start=1):
        assert idx == expected_pool(strategy.kind, k, strategy.period)


def _simulate_periodic(steps, period, cap, seed):
    """Scripted insert/thin schedule on plain index lists."""
    rng = np.random.default_rng(seed)
    kept = [0]
    for k in range(1, steps + 1):
        kept.append(k)
        if k % period:
            kept.remove(k)
        while len(kept) > cap:
            older = [i for i in kept if i != k]
            kept.remove(older[int(rng.integers(len(older)))])
    return kept


def test_periodic_pool_with_cap_matches_simulation():
    strategy = Thinning("periodic", period=10, cap=3)
    for seed in range(20):
        history = _run_pool(strategy, 50, seed)
        assert history[-1] == _simulate_periodic(50, 10, 3, seed)
        assert all(len(h) <= 3 for h in history)
        assert all(i % 10 == 0 for h in history for i in h)


def test_fl_at_seven():
    assert _run_pool(Thinning("FL"), 7)[-1] == [0, 7]


def test_sampling_single_snapshot():
    pool = ClassifierPool.start(Thinning("L"), _marker(0))
    rng = np.random.default_rng(0)
    assert all(pool.sample(0, rng)["v"].item() == 0.0 for _ in range(100))


def test_sampling_frequencies():
    rng = np.random.default_rng(0)
    pool = ClassifierPool.start(Thinning("FL"), _marker(0))
    pool.insert(9, _marker(9))
    first = sum(pool.sample(9, rng)["v"].item() == 0.0 for _ in range(10000)) / 10000
    assert 0.48 <= first <= 0.52

    pool = ClassifierPool.start(Thinning("periodic", period=1, cap=30), _marker(0))
    for k in range(1, 6):
        pool.insert(k, _marker(k))
    draws = np.array([pool.sample(5, rng)["v"].item() for _ in range(100000)])
    assert abs(np.mean(draws == 5) - 0.5) <= 0.01
    for k in range(5):
        assert abs(np.mean(draws == k) - 0.1) <= 0.01


def test_pool_errors():
    with pytest.raises(ConfigError):
        Thinning.parse("Q")
    with pytest.raises(ConfigError):
        Thinning("periodic", period=0)
    with pytest.raises(ContractError):
        ClassifierPool(Thinning("L")).sample(1, np.random.default_rng(0))
    assert Thinning.parse("Lp:100") == Thinning.parse("L100")


# training loop -------------------------------------------------------------------------


def _cfg(**kw):
    base = dict(iterations=5, batch_size=8, seed=3, lr_m=0.01)
    base.update(kw)
    return TrainConfig(**base)


def test_single_iteration_with_l(tiny_net, toy):
    images, labels, f0 = toy
    res = train_casme(_cfg(iterations=1), ScoreConfig(filter_correct_only=False), tiny_net, images, labels, f0)
    assert res.pool.indices() == [1]
    assert res.pool.snapshots[0][1].equal(res.classifier)
    assert not res.classifier.equal(f0)
    assert len(res.metrics) == 1 and res.metrics[0]["pool_size"] == 1


def test_zero_mapper_lr_leaves_mapper_unchanged(tiny_net, toy):
    images, labels, f0 = toy
    res = train_casme(_cfg(lr_m=0.0), ScoreConfig(filter_correct_only=False), tiny_net, images, labels, f0)
    _, _, init_seed = _streams(3)
    fresh = nets.init_params("mapper", tiny_net, init_seed, classifier=res.classifier)
    assert nets.mapper_trainable(res.mapper, tiny_net).equal(nets.mapper_trainable(fresh, tiny_net))


def test_baseline_freezes_classifier(tiny_net, toy):
    images, labels, f0 = toy
    before = f0.copy()
    res = train_baseline(_cfg(iterations=20), ScoreConfig(filter_correct_only=False), tiny_net, images, labels, f0)
    assert res.classifier.equal(before)
    assert f0.equal(before)
    assert res.pool.indices() == [0]
    assert all(r["pool_size"] == 1 for r in res.metrics)


def test_updates_are_separated(tiny_net, toy):
    images, labels, f0 = toy
    f = f0.copy()
    m = nets.init_params("mapper", tiny_net, 5, classifier=f)
    trainable = nets.mapper_trainable(m, tiny_net)
    x, y = Tensor(images[:8]), labels[:8]
    mask = Tensor(nets.map_saliency(m, x, tiny_net, frozen=True).data)

    m_before = trainable.copy()
    with Tape() as tape:
        loss = mixed_class_loss(f, mask, x, y, tiny_net)
    backward(loss, tape, wrt=f.tensors())
    for t in f.tensors():
        t.data -= 0.1 * t.grad
    assert trainable.equal(m_before)

    f_before = f.copy()
    with Tape() as tape:
        s = score_from_mask(f, nets.map_saliency(m, x, tiny_net), x, y, tiny_net, ScoreConfig())
    backward(s, tape, wrt=trainable.tensors())
    for t in trainable.tensors():
        t.data += 0.1 * t.grad
    assert f.equal(f_before)


def test_training_is_deterministic(tiny_net, toy):
    images, labels, f0 = toy
    a = train_casme(_cfg(), ScoreConfig(filter_correct_only=False), tiny_net, images, labels, f0)
    b = train_casme(_cfg(), ScoreConfig(filter_correct_only=False), tiny_net, images, labels, f0)
    assert a.mapper.equal(b.mapper) and a.classifier.equal(b.classifier)
    assert a.metrics == b.metrics
    c = train_casme(_cfg(seed=4), ScoreConfig(filter_correct_only=False), tiny_net, images, labels, f0)
    assert not a.mapper.equal(c.mapper)


def test_fixed_classifier_training_ascends(tiny_net, toy, tmp_path):
    images, labels, f0 = toy
    f0 = f0.copy()
    # A confident classifier leaves room for the entropy to rise.
    f0["head.w"].data *= 20.0
    scfg = ScoreConfig(lambda_r=0.0, filter_correct_only=False)
    cfg = _cfg(iterations=500, checkpoint_every=50, thinning="F", lr_m=0.003)
    res = train_casme(cfg, scfg, tiny_net, images, labels, f0, checkpoint_dir=str(tmp_path))
    probe = Tensor(images[:16])
    values = []
    for k in range(50, 501, 50):
        mapper, _, _, _ = restore_training_checkpoint(os.path.join(str(tmp_path), f"iter{k:06d}.ckpt"))
        values.append(score(mapper, f0, probe, labels[:16], tiny_net, scfg).item())
    init = nets.init_params("mapper", tiny_net, _streams(3)[2],
                            classifier=f0)
    values.insert(0, score(init, f0, probe, labels[:16], tiny_net, scfg).item())
    rises = sum(b >= a for a, b in zip(values, values[1:]))
    assert rises >= 0.8 * (len(values) - 1)
    assert not nets.mapper_trainable(res.mapper, tiny_net).equal(nets.mapper_trainable(init, tiny_net))


def test_training_config_errors():
    with pytest.raises(ConfigError):
        TrainConfig(iterations=0)
    with pytest.raises(ConfigError):
        TrainConfig(thinning="X")
    with pytest.raises(ConfigError):
        TrainConfig(classifier_loss="clean")
