"""Classification losses for the classifier and the score maximized by the mapper."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import nets
from ..autodiff import ParamSet, Tensor, ops
from ..errors import ConfigError


@dataclass
class ScoreConfig:
    score_kind: str = "entropy"
    lambda_r: float = 1.0
    gate_on_disagreement: bool = True
    filter_correct_only: bool = True

    def __post_init__(self):
        if self.score_kind not in ("entropy", "classification"):
            raise ConfigError(f"score_kind must be 'entropy' or 'classification', got {self.score_kind!r}")
        if self.lambda_r < 0:
            raise ConfigError(f"lambda_r must be non-negative, got {self.lambda_r}")


def masked_out(images: Tensor, mask: Tensor) -> Tensor:
    """``(1 - m) * x`` with the mask shared across channels."""
    return ops.mask_channels(images, ops.one_minus(mask))


def masked_class_loss(f: ParamSet, mask: Tensor, images: Tensor, labels, cfg: nets.NetConfig,
                      frozen: bool = False) -> Tensor:
    """Cross-entropy of ``f`` on masked-out images, averaged over the batch."""
    return ops.softmax_cross_entropy(nets.classify(f, masked_out(images, mask), cfg, frozen=frozen), labels)


def mixed_class_loss(f: ParamSet, mask: Tensor, images: Tensor, labels, cfg: nets.NetConfig,
                     frozen: bool = False, parts: Optional[dict] = None) -> Tensor:
    """Half masked-out plus half clean cross-entropy.

    When ``parts`` is given, the two terms are stored under ``"masked"`` and
    ``"clean"``.
    """
    lm = masked_class_loss(f, mask, images, labels, cfg, frozen=frozen)
    lc = ops.softmax_cross_entropy(nets.classify(f, images, cfg, frozen=frozen), labels)
    if parts is not None:
        parts["masked"] = lm.item()
        parts["clean"] = lc.item()
    return ops.scale(ops.add(lm, lc), 0.5)


@dataclass
class ScoreTerms:
    value: Tensor
    mask: Tensor
    gate: np.ndarray
    kept: np.ndarray


def _gated_score(f, mask, images, labels, net_cfg, scfg, clean_logits):
    logits_out = nets.classify(f, masked_out(images, mask), net_cfg, frozen=True)
    if scfg.gate_on_disagreement:
        if clean_logits is None:
            clean_logits = nets.classify(f, images.detach(), net_cfg, frozen=True).data
        gate = (np.argmax(clean_logits, axis=1) != np.argmax(logits_out.data, axis=1)).astype(np.float64)
    else:
        gate = np.ones(images.shape[0])
    if scfg.score_kind == "entropy":
        term = ops.softmax_entropy(logits_out)
    else:
        term = ops.softmax_cross_entropy(logits_out, labels)
    return ops.sub(term, ops.scale(ops.l1_mean(mask, gate), scfg.lambda_r)), gate


def score_from_mask(f: ParamSet, mask: Tensor, images: Tensor, labels, net_cfg: nets.NetConfig,
                    scfg: ScoreConfig, clean_logits: Optional[np.ndarray] = None) -> Tensor:
    """Score of a given mask under classifier ``f`` (held constant).

    Entropy kind: mean entropy of ``f`` on masked-out images.  Classification
    kind: mean cross-entropy on masked-out images.  Both subtract
    ``lambda_r`` times the mean mask intensity over gated samples; with
    disagreement gating a sample is gated only when the argmax on the
    masked-out image differs from the argmax on the clean image.
    """
    return _gated_score(f, mask, images, labels, net_cfg, scfg, clean_logits)[0]


def score_terms(mapper: ParamSet, f: ParamSet, images: Tensor, labels, net_cfg: nets.NetConfig,
                scfg: ScoreConfig) -> Optional[ScoreTerms]:
    """Filter the batch, map it, and score it.  ``None`` when nothing survives filtering."""
    labels = np.asarray(labels)
    clean_logits = nets.classify(f, images.detach(), net_cfg, frozen=True).data
    kept = np.arange(images.shape[0])
    if scfg.filter_correct_only:
        kept = np.flatnonzero(np.argmax(clean_logits, axis=1) == labels)
        if kept.size == 0:
            return None
        if kept.size != images.shape[0]:
            images = Tensor(images.data[kept])
            labels = labels[kept]
            clean_logits = clean_logits[kept]
    mask = nets.map_saliency(mapper, images, net_cfg)
    value, gate = _gated_score(f, mask, images, labels, net_cfg, scfg, clean_logits)
    return ScoreTerms(value=value, mask=mask, gate=gate, kept=kept)


def score(mapper: ParamSet, f: ParamSet, images: Tensor, labels, net_cfg: nets.NetConfig,
          scfg: ScoreConfig) -> Optional[Tensor]:
    """Scalar score of the mapper against classifier ``f``; ``None`` signals a skipped update."""
    terms = score_terms(mapper, f, images, labels, net_cfg, scfg)
    return None if terms is None else terms.value
