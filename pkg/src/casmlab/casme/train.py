"""Alternating classifier / mapper training and the fixed-classifier baseline."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Iterator, List, Optional

import numpy as np

from .. import nets
from ..autodiff import ParamSet, Tape, Tensor, adam, backward, ops, optimizer_step, save_checkpoint, sgd
from ..errors import ConfigError, DivergenceError
from .objectives import ScoreConfig, masked_class_loss, mixed_class_loss, score_terms
from .pool import ClassifierPool, Thinning

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("iter", "L_clean", "L_masked", "S", "coverage", "pool_size")


@dataclass
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 32
    lr_f: float = 0.001
    momentum_f: float = 0.9
    weight_decay_f: float = 1e-4
    lr_m: float = 0.001
    weight_decay_m: float = 1e-4
    thinning: str = "L"
    cap: int = 30
    seed: int = 0
    pretrain_epochs: int = 5
    pretrain_lr: float = 0.003
    target_coverage: float = 0.5
    classifier_loss: str = "mixed"
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.classifier_loss not in ("mixed", "masked"):
            raise ConfigError(f"classifier_loss must be 'mixed' or 'masked', got {self.classifier_loss!r}")
        Thinning.parse(self.thinning, self.cap)

    @property
    def strategy(self) -> Thinning:
        return Thinning.parse(self.thinning, self.cap)


@dataclass
class TrainResult:
    mapper: ParamSet
    classifier: ParamSet
    pool: ClassifierPool
    metrics: List[dict] = field(default_factory=list)


def _streams(seed: int):
    batches, pool, init = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(batches), np.random.default_rng(pool), int(init.generate_state(1)[0])


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Endless shuffled minibatches; each epoch is a fresh permutation."""
    if n == 0:
        raise ConfigError("no training samples")
    batch_size = min(batch_size, n)
    while True:
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield order[start:start + batch_size]


def pretrain_classifier(net_cfg: nets.NetConfig, images: np.ndarray, labels: np.ndarray, epochs: int,
                        seed: int, lr: float = 0.003, batch_size: int = 32) -> ParamSet:
    """Train a fresh classifier on clean images with Adam."""
    batch_rng, _, init_seed = _streams(seed)
    params = nets.init_params("classifier", net_cfg, init_seed)
    opt = adam(lr)
    n = len(labels)
    steps = max(1, epochs * (n // max(1, min(batch_size, n))))
    it = minibatches(n, batch_size, batch_rng)
    for step in range(steps):
        idx = next(it)
        with Tape() as tape:
            loss = ops.softmax_cross_entropy(nets.classify(params, Tensor(images[idx]), net_cfg), labels[idx])
        if not math.isfinite(loss.item()):
            raise DivergenceError(f"pretraining loss became {loss.item()} at step {step}")
        backward(loss, tape, wrt=params.tensors())
        optimizer_step(opt, params)
    return params


def accuracy(params: ParamSet, images: np.ndarray, labels: np.ndarray, net_cfg: nets.NetConfig,
             batch_size: int = 256) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(predict(params, images, net_cfg, batch_size) == labels))


def predict(params: ParamSet, images: np.ndarray, net_cfg: nets.NetConfig, batch_size: int = 256) -> np.ndarray:
    out = []
    for s in range(0, len(images), batch_size):
        out.append(np.argmax(nets.classify(params, Tensor(images[s:s + batch_size]), net_cfg, frozen=True).data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def metrics_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def write_text_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def train_casme(cfg: TrainConfig, scfg: ScoreConfig, net_cfg: nets.NetConfig, images: np.ndarray,
                labels: np.ndarray, f0: ParamSet, log_path: Optional[str] = None,
                checkpoint_dir: Optional[str] = None) -> TrainResult:
    """Alternate a classifier SGD step with a mapper ascent step on the score.

    Each iteration: update the live classifier on the mixed (or masked)
    loss with the current mask held fixed, add a snapshot to the pool, sample
    a classifier from the pool, take one Adam step increasing the score of
    the mapper against it, then thin the pool.  Under strategy ``F`` the
    classifier is frozen at ``f0`` and never added to the pool.
    """
    strategy = cfg.strategy
    batch_rng, pool_rng, init_seed = _streams(cfg.seed)
    classifier = f0.copy()
    mapper = nets.init_params("mapper", net_cfg, init_seed, classifier=classifier)
    trainable = nets.mapper_trainable(mapper, net_cfg)
    opt_f = sgd(cfg.lr_f, momentum=cfg.momentum_f, weight_decay=cfg.weight_decay_f)
    opt_m = adam(cfg.lr_m, weight_decay=cfg.weight_decay_m)
    pool = ClassifierPool.start(strategy, classifier)
    frozen_classifier = strategy.kind == "F"
    labels = np.asarray(labels)
    batches = minibatches(len(labels), cfg.batch_size, batch_rng)
    rows = []

    for k in range(1, cfg.iterations + 1):
        idx = next(batches)
        x = Tensor(images[idx])
        y = labels[idx]

        prev_mask = Tensor(nets.map_saliency(mapper, x, net_cfg, frozen=True).data)
        parts = {}
        if frozen_classifier:
            parts["clean"] = ops.softmax_cross_entropy(nets.classify(classifier, x, net_cfg, frozen=True), y).item()
            parts["masked"] = masked_class_loss(classifier, prev_mask, x, y, net_cfg, frozen=True).item()
        else:
            with Tape() as tape:
                if cfg.classifier_loss == "mixed":
                    loss_f = mixed_class_loss(classifier, prev_mask, x, y, net_cfg, parts=parts)
                else:
                    loss_f = masked_class_loss(classifier, prev_mask, x, y, net_cfg)
                    parts["masked"] = loss_f.item()
                    parts["clean"] = float("nan")
            if not math.isfinite(loss_f.item()):
                raise DivergenceError(f"classifier loss became {loss_f.item()} at iteration {k}")
            backward(loss_f, tape, wrt=classifier.tensors())
            optimizer_step(opt_f, classifier)
            pool.insert(k, classifier)

        sampled = pool.sample(k, pool_rng)
        with Tape() as tape:
            terms = score_terms(mapper, sampled, x, y, net_cfg, scfg)
            if terms is not None:
                neg = ops.scale(terms.value, -1.0)
        if terms is None:
            s_value, coverage = float("nan"), float("nan")
        else:
            s_value = terms.value.item()
            coverage = float(terms.mask.data.mean())
            if not math.isfinite(s_value):
                raise DivergenceError(f"score became {s_value} at iteration {k}")
            backward(neg, tape, wrt=trainable.tensors())
            optimizer_step(opt_m, trainable)
        pool.thin(k, pool_rng)

        rows.append({
            "iter": k,
            "L_clean": parts["clean"],
            "L_masked": parts["masked"],
            "S": s_value,
            "coverage": coverage,
            "pool_size": len(pool),
        })
        if checkpoint_dir and cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
            save_training_checkpoint(os.path.join(checkpoint_dir, f"iter{k:06d}.ckpt"), mapper, classifier, net_cfg)

    if log_path:
        write_text_atomic(log_path, metrics_csv(rows))
    return TrainResult(mapper=mapper, classifier=classifier, pool=pool, metrics=rows)


def train_baseline(cfg: TrainConfig, scfg: ScoreConfig, net_cfg: nets.NetConfig, images: np.ndarray,
                   labels: np.ndarray, f0: ParamSet, **kwargs) -> TrainResult:
    """Classifier-dependent mapper: :func:`train_casme` with strategy ``F``."""
    fixed = TrainConfig(**{**asdict(cfg), "thinning": "F"})
    return train_casme(fixed, scfg, net_cfg, images, labels, f0, **kwargs)


def save_training_checkpoint(path: str, mapper: ParamSet, classifier: ParamSet, net_cfg: nets.NetConfig,
                             extra: Optional[dict] = None) -> None:
    arrays = {}
    for name, t in classifier.items():
        arrays[f"classifier/{name}"] = t.data
    for name, t in mapper.items():
        if net_cfg.share_encoder and name.startswith("encoder."):
            continue
        arrays[f"mapper/{name}"] = t.data
    meta = {"net": net_cfg.to_dict()}
    if extra:
        meta.update(extra)
    save_checkpoint(path, arrays, meta)


def restore_training_checkpoint(path: str):
    """Return ``(mapper, classifier, net_cfg, meta)`` from a training checkpoint."""
    from ..autodiff import load_checkpoint

    arrays, meta = load_checkpoint(path)
    net_cfg = nets.NetConfig(**meta["net"])
    classifier = nets.init_params("classifier", net_cfg, 0)
    classifier.load_arrays({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("classifier/")})
    mapper = nets.init_params("mapper", net_cfg, 0, classifier=classifier)
    mapper.load_arrays({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("mapper/")})
    return mapper, classifier, net_cfg, meta
