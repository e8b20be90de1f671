"""Small end-to-end experiments comparing the classifier-agnostic mapper with the fixed-classifier baseline.

Every run writes its artifacts under a root directory and a ``summary.json``;
a run whose summary exists with an identical resolved config is reused.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Dict, List, Optional

import numpy as np

from . import cli
from . import data as data_mod
from . import eval as ev
from .casme import CalibrationResult
from .config import RunConfig, desk_config
from .maskops import discretize, mask_statistics

log = logging.getLogger(__name__)

MODES = ("baseline", "casme")
SEEDS = (0, 1, 2)


def setting_config(setting: str, seed: int, extra: Optional[dict] = None) -> RunConfig:
    """Desk configuration for ``standard``, ``duplicated`` or ``unseen`` runs with one seed."""
    over = {"train.seed": seed}
    if setting == "duplicated":
        over.update({"data.width": 16, "gen.duplicated": True})
    elif setting not in ("standard", "unseen", "calibrated"):
        raise ValueError(f"unknown setting {setting!r}")
    over.update(extra or {})
    return desk_config(over)


def _without_paths(flat: dict) -> dict:
    return {k: v for k, v in flat.items() if not k.startswith("paths.")}


def _config_matches(out_dir: str, cfg: RunConfig) -> bool:
    config = os.path.join(out_dir, cli.CONFIG_FILE)
    if not os.path.exists(config):
        return False
    with open(config) as fh:
        stored = json.load(fh)
    # paths only locate artifacts, so a moved cache stays valid
    return _without_paths(stored) == _without_paths(json.loads(cfg.to_json()))


def _cached(out_dir: str, cfg: RunConfig) -> Optional[dict]:
    summary = os.path.join(out_dir, "summary.json")
    if not (os.path.exists(summary) and _config_matches(out_dir, cfg)):
        return None
    with open(summary) as fh:
        return json.load(fh)


def mask_summary(maps: np.ndarray, ds) -> dict:
    """Localization, shape statistics and two-copy measures of a set of validation maps."""
    recs = ev.localization_records(maps, ds)
    binary = [discretize(m) for m in maps]
    out = {
        "le": ev.localization_error(recs),
        "f1": float(np.mean([ev.f1_continuous(m, ds.boxes[i]) for i, m in enumerate(maps)])),
        "coverage": float(np.mean(maps)),
        "binary_coverage": float(np.mean([b.mean() for b in binary])),
        "mirror_overlap": float(np.mean([ev.mirror_overlap(b) for b in binary])),
        "union_recall": float(np.mean([ev.union_recall(b, ds.boxes[i]) for i, b in enumerate(binary)])),
    }
    out.update(mask_statistics(list(maps)).to_dict())
    return out


def run_pair(root: str, setting: str, seed: int, modes=MODES, extra: Optional[dict] = None) -> Dict[str, dict]:
    """Pretrain one classifier, then train each mode from it and summarize on validation data."""
    cfg = setting_config(setting, seed, extra)
    ds = cli.build_dataset(cfg)
    base = os.path.join(root, setting, f"seed{seed}")
    f0 = None
    results = {}
    for mode in modes:
        out_dir = os.path.join(base, mode)
        run_cfg = cfg.override({"paths.out_dir": out_dir})
        cached = _cached(out_dir, run_cfg)
        if cached is not None:
            results[mode] = cached
            continue
        if f0 is None:
            f0 = cli.cmd_pretrain(cfg.override({"paths.out_dir": base}), ds)
        log.info("training %s %s seed %d", setting, mode, seed)
        result = cli.cmd_train(run_cfg, mode, ds, f0)
        va = ds.split("val")
        maps = ev.saliency_maps(result.mapper, va.images, cfg.net)
        summary = mask_summary(maps, va)
        summary["om"] = cli.cmd_eval_loc(run_cfg, os.path.join(out_dir, cli.MODEL_FILE), ds).om
        data_mod.write_json_atomic(os.path.join(out_dir, "summary.json"), summary)
        results[mode] = summary
    return results


def run_suite(root: str, seed: int, suite_size: int = 4) -> Dict[str, dict]:
    """Masking-suite accuracies for both modes of a standard run, sharing one set of fresh classifiers."""
    cfg = setting_config("standard", seed)
    run_pair(root, "standard", seed)
    ds = cli.build_dataset(cfg)
    suite = None
    out = {}
    for mode in MODES:
        out_dir = os.path.join(root, "standard", f"seed{seed}", mode)
        path = os.path.join(out_dir, "eval_cls.json")
        if os.path.exists(path):
            with open(path) as fh:
                rep = json.load(fh)
            if len(rep["suite"]) == suite_size:
                out[mode] = rep["extra"]
                continue
        if suite is None:
            suite = cli.train_suite(cfg, ds, suite_size)
        run_cfg = cfg.override({"paths.out_dir": out_dir})
        out[mode] = cli.cmd_eval_cls(run_cfg, os.path.join(out_dir, cli.MODEL_FILE), suite_size, ds, suite).extra
    return out


def run_unseen(root: str, seed: int, fractions=(0.5, 0.5)) -> dict:
    """Train on the classes of the first subset only and report LE per subset."""
    cfg = setting_config("unseen", seed)
    out_dir = os.path.join(root, "unseen", f"seed{seed}")
    run_cfg = cfg.override({"paths.out_dir": out_dir})
    cached = _cached(out_dir, run_cfg)
    if cached is not None:
        return cached
    ds, groups = data_mod.split_classes(cli.build_dataset(cfg), fractions, seed)
    seen = [next(iter(groups))]
    seen_ds = ds.with_classes([c for name in seen for c in groups[name]])
    f0 = cli.cmd_pretrain(run_cfg, seen_ds)
    result = cli.cmd_train(run_cfg, "casme", seen_ds, f0)
    va = ds.split("val")
    maps = ev.saliency_maps(result.mapper, va.images, cfg.net)
    summary = ev.unseen_class_eval(maps, va, groups, seen)
    summary["groups"] = groups
    data_mod.write_json_atomic(os.path.join(out_dir, "summary.json"), summary)
    return summary


def run_calibration(root: str, seed: int = 0, extra: Optional[dict] = None):
    """Bisect the penalty weight with short probes on the standard setting."""
    # Probes use the full schedule so the chosen weight transfers to full runs unchanged.
    base = setting_config("standard", seed)
    cfg = setting_config("standard", seed, {"calibrate.probe_iterations": base.train.iterations,
                                            "calibrate.held_out": len(base.data.class_names()) * base.data.val_per_class,
                                            **(extra or {})})
    out_dir = os.path.join(root, "calibrate", f"seed{seed}")
    run_cfg = cfg.override({"paths.out_dir": out_dir})
    result_path = os.path.join(out_dir, "calibrate.json")
    if os.path.exists(result_path) and _config_matches(out_dir, run_cfg):
        with open(result_path) as fh:
            return CalibrationResult(**json.load(fh))
    ds = cli.build_dataset(cfg)
    f0 = cli.cmd_pretrain(run_cfg, ds)
    return cli.cmd_calibrate(run_cfg, ds, f0)


def verify_calibration(root: str, result, seed: int = 0) -> dict:
    """Train a full-length run at the calibrated weight and summarize its validation masks."""
    return run_pair(root, "calibrated", seed, modes=("casme",), extra={"score.lambda_r": float(result.lambda_r)})


def metrics_files(root: str, setting: str, seeds=SEEDS) -> List[str]:
    return [os.path.join(root, setting, f"seed{s}", m, cli.METRICS_FILE) for s in seeds for m in MODES]


def mean_over(results: List[Dict[str, dict]], mode: str, key: str) -> float:
    return float(np.mean([r[mode][key] for r in results]))
