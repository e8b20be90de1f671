"""Localization metrics, the multi-classifier masking suite, and unseen-class tables."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import nets
from .autodiff import ParamSet, Tensor
from .maskops import BBox, discretize, inpaint_telea, iou, predicted_box, random_mask
from .maskops.core import largest_component, tightest_bbox

log = logging.getLogger(__name__)

IOU_THRESHOLD = 0.5


@dataclass
class LocalizationRecord:
    image_id: int
    pred_box: BBox
    gt_boxes: List[BBox]
    pred_class: int
    true_class: int

    def __post_init__(self):
        if not self.gt_boxes:
            raise ValueError(f"record {self.image_id} has no ground-truth boxes")
        self.pred_box = BBox(*self.pred_box)
        self.gt_boxes = [BBox(*b) for b in self.gt_boxes]

    def localized(self) -> bool:
        return any(iou(self.pred_box, gt) > IOU_THRESHOLD for gt in self.gt_boxes)


def localization_error(records: Sequence[LocalizationRecord]) -> float:
    """Fraction of images where no ground-truth box has IOU > 0.5 with the prediction."""
    if not records:
        raise ValueError("localization_error needs at least one record")
    return sum(not r.localized() for r in records) / len(records)


def official_metric(records: Sequence[LocalizationRecord]) -> float:
    """Like :func:`localization_error` but a hit also needs the right class (single guess)."""
    if not records:
        raise ValueError("official_metric needs at least one record")
    return sum(not (r.localized() and r.pred_class == r.true_class) for r in records) / len(records)


def f1_continuous(saliency: np.ndarray, gt_boxes: Sequence[BBox]) -> float:
    """Best mass-based F1 of a continuous map against any ground-truth box."""
    m = np.asarray(saliency, dtype=np.float64)
    total = m.sum()
    if total <= 0:
        return 0.0
    best = 0.0
    for b in gt_boxes:
        b = BBox(*b)
        inside = m[b.row0:b.row1, b.col0:b.col1].sum()
        p = inside / total
        r = inside / b.area
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        best = max(best, f1)
    return float(best)


# batched inference -------------------------------------------------------------


def saliency_maps(mapper: ParamSet, images: np.ndarray, net_cfg: nets.NetConfig, batch_size: int = 128) -> np.ndarray:
    out = []
    for s in range(0, len(images), batch_size):
        out.append(nets.map_saliency(mapper, Tensor(images[s:s + batch_size]), net_cfg, frozen=True).data)
    return np.concatenate(out) if out else np.zeros((0,) + images.shape[2:])


def predictions(classifier: ParamSet, images: np.ndarray, net_cfg: nets.NetConfig, batch_size: int = 256) -> np.ndarray:
    out = []
    for s in range(0, len(images), batch_size):
        logits = nets.classify(classifier, Tensor(images[s:s + batch_size]), net_cfg, frozen=True).data
        out.append(np.argmax(logits, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def localization_records(maps: np.ndarray, dataset, pred_classes: Optional[np.ndarray] = None,
                         alpha: float = 1.0, connectivity: int = 4) -> List[LocalizationRecord]:
    recs = []
    for i, m in enumerate(maps):
        pc = int(pred_classes[i]) if pred_classes is not None else -1
        recs.append(LocalizationRecord(i, predicted_box(m, alpha, connectivity), list(dataset.boxes[i]),
                                       pc, int(dataset.labels[i])))
    return recs


@dataclass
class EvalReport:
    model: str
    om: float = float("nan")
    le: float = float("nan")
    f1: float = float("nan")
    subset_le: Dict[str, float] = field(default_factory=dict)
    suite: List[dict] = field(default_factory=list)
    extra: Dict[str, float] = field(default_factory=dict)

    def rows(self) -> List[tuple]:
        """``(model, metric, subset, value)`` rows."""
        out = [(self.model, "OM", "all", self.om), (self.model, "LE", "all", self.le), (self.model, "F1", "all", self.f1)]
        for name, v in self.subset_le.items():
            out.append((self.model, "LE", name, v))
        for i, entry in enumerate(self.suite):
            for key, v in entry.items():
                if key != "classifier":
                    out.append((self.model, f"acc_{key}", f"classifier{i}", v))
        for key, v in self.extra.items():
            out.append((self.model, key, "all", v))
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("model", "metric", "subset", "value"))
        for model, metric, subset, v in self.rows():
            w.writerow((model, metric, subset, repr(float(v))))
        return buf.getvalue()


def evaluate_localization(mapper: ParamSet, classifier: Optional[ParamSet], dataset, net_cfg: nets.NetConfig,
                          model: str = "model", maps: Optional[np.ndarray] = None) -> EvalReport:
    """OM, LE and mean F1 over ``dataset``."""
    if maps is None:
        maps = saliency_maps(mapper, dataset.images, net_cfg)
    preds = predictions(classifier, dataset.images, net_cfg) if classifier is not None else None
    recs = localization_records(maps, dataset, preds)
    report = EvalReport(model=model)
    report.le = localization_error(recs)
    report.om = official_metric(recs) if preds is not None else float("nan")
    report.f1 = float(np.mean([f1_continuous(m, dataset.boxes[i]) for i, m in enumerate(maps)]))
    return report


# masking suite -------------------------------------------------------------------


def masked_variants(images: np.ndarray, binary: np.ndarray, radius: int = 3) -> dict:
    """Masked-in, masked-out and inpainted masked-out versions of a batch."""
    b = binary[:, None].astype(np.float64)
    masked_in = images * b
    masked_out = images * (1.0 - b)
    inpainted = np.stack([inpaint_telea(masked_out[i], binary[i], radius) for i in range(len(images))])
    return {"masked_in": masked_in, "masked_out": masked_out, "inpainted": inpainted}


def classifier_suite_eval(classifiers: Sequence[ParamSet], maps: np.ndarray, dataset, net_cfg: nets.NetConfig,
                          inpaint_radius: int = 3, seed: int = 0) -> List[dict]:
    """Top-1 accuracy of each classifier on clean, masked and inpainted images.

    The binary masks come from discretizing ``maps``.  Random rectangles
    matched to each image's binary coverage serve as the control.
    """
    binary = np.stack([discretize(m) for m in maps])
    variants = masked_variants(dataset.images, binary, inpaint_radius)
    rand = np.stack([
        random_mask(binary.shape[1:], float(binary[i].mean()), np.random.SeedSequence([seed, i]))
        for i in range(len(binary))
    ])
    rvariants = masked_variants(dataset.images, rand, inpaint_radius)
    y = np.asarray(dataset.labels)
    results = []
    for ci, clf in enumerate(classifiers):
        entry = {"classifier": ci, "clean": float(np.mean(predictions(clf, dataset.images, net_cfg) == y))}
        for key, imgs in variants.items():
            entry[key] = float(np.mean(predictions(clf, imgs, net_cfg) == y))
        entry["random_masked_out"] = float(np.mean(predictions(clf, rvariants["masked_out"], net_cfg) == y))
        entry["random_inpainted"] = float(np.mean(predictions(clf, rvariants["inpainted"], net_cfg) == y))
        results.append(entry)
    return results


def suite_means(results: Sequence[dict]) -> dict:
    keys = [k for k in results[0] if k != "classifier"]
    return {k: float(np.mean([r[k] for r in results])) for k in keys}


# unseen classes --------------------------------------------------------------------


def unseen_class_eval(maps: np.ndarray, dataset, groups: Dict[str, List[int]], seen: Sequence[str]) -> dict:
    """LE per class subset plus pooled seen/unseen LE and record counts."""
    recs = localization_records(maps, dataset)
    subset_of = {c: name for name, ids in groups.items() for c in ids}
    table, counts = {}, {}
    for name in groups:
        sel = [r for r in recs if subset_of[r.true_class] == name]
        if not sel:
            log.warning("subset %s has no images; excluded", name)
            continue
        table[name] = localization_error(sel)
        counts[name] = len(sel)
    seen = set(seen)
    seen_recs = [r for r in recs if subset_of[r.true_class] in seen]
    unseen_recs = [r for r in recs if subset_of[r.true_class] not in seen]
    return {
        "subset_le": table,
        "subset_counts": counts,
        "seen_le": localization_error(seen_recs) if seen_recs else None,
        "unseen_le": localization_error(unseen_recs) if unseen_recs else None,
        "all_le": localization_error(recs),
    }


# auxiliary mask measures -------------------------------------------------------------


def mirror_overlap(binary: np.ndarray) -> float:
    """IOU of a binary mask with its left-right flip (0 for an empty mask)."""
    b = np.asarray(binary) != 0
    f = b[:, ::-1]
    union = np.logical_or(b, f).sum()
    return float(np.logical_and(b, f).sum() / union) if union else 0.0


def union_recall(binary: np.ndarray, gt_boxes: Sequence[BBox]) -> float:
    """Fraction of pixels in the union of ``gt_boxes`` covered by ``binary``."""
    b = np.asarray(binary) != 0
    region = np.zeros(b.shape, dtype=bool)
    for box in gt_boxes:
        box = BBox(*box)
        region[box.row0:box.row1, box.col0:box.col1] = True
    return float((b & region).sum() / region.sum())


__all__ = [
    "LocalizationRecord",
    "EvalReport",
    "localization_error",
    "official_metric",
    "f1_continuous",
    "classifier_suite_eval",
    "unseen_class_eval",
    "evaluate_localization",
    "mirror_overlap",
    "union_recall",
    "largest_component",
    "tightest_bbox",
]
