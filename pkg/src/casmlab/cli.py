"""``casmlab`` command line: data generation, pretraining, training, evaluation and reports.

Exit codes: 0 success, 1 runtime failure (including missing inputs), 2 config error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image

from . import data as data_mod
from . import eval as ev
from . import nets
from .autodiff import ParamSet, load_checkpoint, save_checkpoint
from .casme import (
    TrainConfig,
    calibrate_lambda,
    metrics_csv,
    pretrain_classifier,
    restore_training_checkpoint,
    save_training_checkpoint,
    train_casme,
)
from .casme.train import write_text_atomic
from .config import RunConfig, load_config
from .data import Dataset, write_json_atomic
from .errors import ConfigError, DivergenceError
from .maskops import discretize, mask_statistics

log = logging.getLogger("casmlab")

CLASSIFIER_FILE = "classifier.ckpt"
MODEL_FILE = "model.ckpt"
POOL_FILE = "pool.ckpt"
METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.json"


# helpers --------------------------------------------------------------------------


def write_resolved_config(cfg: RunConfig, out_dir: str) -> None:
    write_text_atomic(os.path.join(out_dir, CONFIG_FILE), cfg.to_json())


def build_dataset(cfg: RunConfig) -> Dataset:
    ds = data_mod.gen_shapes(cfg.data, cfg.gen.seed)
    if cfg.gen.duplicated:
        ds = data_mod.duplicate_halves(ds, 2 * cfg.data.width)
    return ds


def open_dataset(cfg: RunConfig) -> Dataset:
    manifest = os.path.join(cfg.paths.data_dir, "manifest.json")
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"dataset manifest not found: {manifest}")
    return data_mod.load_dataset(manifest)


def save_classifier(path: str, params: ParamSet, net_cfg: nets.NetConfig) -> None:
    save_checkpoint(path, {f"classifier/{k}": t.data for k, t in params.items()}, {"net": net_cfg.to_dict()})


def load_classifier(path: str, net_cfg: nets.NetConfig) -> ParamSet:
    if not os.path.exists(path):
        raise FileNotFoundError(f"classifier checkpoint not found: {path}")
    arrays, _ = load_checkpoint(path)
    params = nets.init_params("classifier", net_cfg, 0)
    params.load_arrays({k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("classifier/")})
    return params


def load_model(path: str):
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return restore_training_checkpoint(path)


def _train_config(cfg: RunConfig, mode: str) -> TrainConfig:
    if mode not in ("casme", "baseline"):
        raise ConfigError(f"mode must be 'casme' or 'baseline', got {mode!r}")
    if mode == "baseline":
        return TrainConfig(**{**cfg.train.__dict__, "thinning": "F"})
    return cfg.train


# commands -------------------------------------------------------------------------


def cmd_gen_data(cfg: RunConfig) -> str:
    """Render the dataset into ``paths.data_dir``; return the manifest path."""
    ds = build_dataset(cfg)
    manifest = ds.save(cfg.paths.data_dir)
    write_resolved_config(cfg, cfg.paths.data_dir)
    return manifest


def cmd_pretrain(cfg: RunConfig, ds: Optional[Dataset] = None) -> ParamSet:
    """Train the initial classifier on the clean training split."""
    ds = ds if ds is not None else open_dataset(cfg)
    tr = ds.split("train")
    f0 = pretrain_classifier(cfg.net, tr.images, tr.labels, cfg.train.pretrain_epochs, cfg.train.seed,
                             cfg.train.pretrain_lr, cfg.train.batch_size)
    os.makedirs(cfg.paths.out_dir, exist_ok=True)
    save_classifier(os.path.join(cfg.paths.out_dir, CLASSIFIER_FILE), f0, cfg.net)
    write_resolved_config(cfg, cfg.paths.out_dir)
    return f0


def cmd_train(cfg: RunConfig, mode: str = "casme", ds: Optional[Dataset] = None,
              f0: Optional[ParamSet] = None):
    """Train a mapper; writes the model, the classifier pool and the metrics CSV."""
    tcfg = _train_config(cfg, mode)
    ds = ds if ds is not None else open_dataset(cfg)
    if f0 is None:
        path = cfg.paths.classifier or os.path.join(cfg.paths.out_dir, CLASSIFIER_FILE)
        f0 = load_classifier(path, cfg.net)
    tr = ds.split("train")
    out = cfg.paths.out_dir
    os.makedirs(out, exist_ok=True)
    result = train_casme(tcfg, cfg.score, cfg.net, tr.images, tr.labels, f0)
    write_text_atomic(os.path.join(out, METRICS_FILE), metrics_csv(result.metrics))
    save_training_checkpoint(os.path.join(out, MODEL_FILE), result.mapper, result.classifier, cfg.net,
                             {"mode": mode, "thinning": str(tcfg.strategy)})
    pool_arrays = {f"k{k:08d}/{name}": t.data for k, snap in result.pool.snapshots for name, t in snap.items()}
    save_checkpoint(os.path.join(out, POOL_FILE), pool_arrays, {"indices": result.pool.indices()})
    write_resolved_config(cfg, out)
    return result


def cmd_eval_loc(cfg: RunConfig, checkpoint: str, ds: Optional[Dataset] = None) -> ev.EvalReport:
    mapper, classifier, net_cfg, meta = load_model(checkpoint)
    ds = ds if ds is not None else open_dataset(cfg)
    va = ds.split("val")
    report = ev.evaluate_localization(mapper, classifier, va, net_cfg, model=meta.get("mode", "model"))
    out = cfg.paths.out_dir
    write_text_atomic(os.path.join(out, "eval_loc.json"), report.to_json())
    write_text_atomic(os.path.join(out, "eval_loc.csv"), report.to_csv())
    write_resolved_config(cfg, out)
    return report


def train_suite(cfg: RunConfig, ds: Dataset, size: int) -> List[ParamSet]:
    """``size`` fresh classifiers on the clean training split, seeded apart from training."""
    tr = ds.split("train")
    return [
        pretrain_classifier(cfg.net, tr.images, tr.labels, cfg.eval.suite_epochs, 10_000 + cfg.train.seed * 100 + i,
                            cfg.train.pretrain_lr, cfg.train.batch_size)
        for i in range(size)
    ]


def cmd_eval_cls(cfg: RunConfig, checkpoint: str, suite_size: Optional[int] = None,
                 ds: Optional[Dataset] = None, suite: Optional[List[ParamSet]] = None) -> ev.EvalReport:
    """Accuracy of fresh classifiers on masked-in, masked-out and inpainted images plus the random control."""
    mapper, _, net_cfg, meta = load_model(checkpoint)
    ds = ds if ds is not None else open_dataset(cfg)
    size = cfg.eval.suite_size if suite_size is None else suite_size
    if size < 1:
        raise ConfigError("suite size must be >= 1")
    suite = suite if suite is not None else train_suite(cfg, ds, size)
    va = ds.split("val")
    maps = ev.saliency_maps(mapper, va.images, net_cfg)
    results = ev.classifier_suite_eval(suite, maps, va, net_cfg, cfg.eval.inpaint_radius, cfg.train.seed)
    report = ev.EvalReport(model=meta.get("mode", "model"), suite=results, extra=ev.suite_means(results))
    out = cfg.paths.out_dir
    write_text_atomic(os.path.join(out, "eval_cls.json"), report.to_json())
    write_text_atomic(os.path.join(out, "eval_cls.csv"), report.to_csv())
    write_resolved_config(cfg, out)
    return report


def montage(rows: Sequence[np.ndarray], gap: int = 2) -> np.ndarray:
    """Tile ``rows`` (each ``[n, 3, H, W]``) into one ``[3, R*(H+gap)-gap, n*(W+gap)-gap]`` image, white gaps."""
    n, c, h, w = rows[0].shape
    grid = np.ones((c, len(rows) * (h + gap) - gap, n * (w + gap) - gap))
    for r, row in enumerate(rows):
        for i in range(n):
            grid[:, r * (h + gap):r * (h + gap) + h, i * (w + gap):i * (w + gap) + w] = row[i]
    return grid


def cmd_viz(cfg: RunConfig, checkpoint: str, count: Optional[int] = None,
            ds: Optional[Dataset] = None) -> str:
    """Four-row PNG grid: original, masked-in, masked-out, inpainted masked-out."""
    mapper, _, net_cfg, _ = load_model(checkpoint)
    ds = ds if ds is not None else open_dataset(cfg)
    va = ds.split("val")
    n = cfg.eval.viz_count if count is None else count
    if not 1 <= n <= len(va):
        raise ConfigError(f"count must be in [1, {len(va)}], got {n}")
    start = int(np.random.default_rng(cfg.train.seed).integers(0, len(va) - n + 1))
    images = va.images[start:start + n]
    maps = ev.saliency_maps(mapper, images, net_cfg)
    binary = np.stack([discretize(m, cfg.eval.alpha) for m in maps])
    v = ev.masked_variants(images, binary, cfg.eval.inpaint_radius)
    grid = montage([images, v["masked_in"], v["masked_out"], v["inpainted"]])
    out = cfg.paths.out_dir
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "viz.png")
    tmp = os.path.join(out, ".viz.png.tmp")
    Image.fromarray(data_mod.to_uint8(grid), mode="RGB").save(tmp, format="PNG")
    os.replace(tmp, path)
    write_resolved_config(cfg, out)
    return path


def cmd_stats(cfg: RunConfig, checkpoint: str, ds: Optional[Dataset] = None) -> dict:
    mapper, _, net_cfg, _ = load_model(checkpoint)
    ds = ds if ds is not None else open_dataset(cfg)
    maps = ev.saliency_maps(mapper, ds.split("val").images, net_cfg)
    stats = mask_statistics(list(maps)).to_dict()
    write_json_atomic(os.path.join(cfg.paths.out_dir, "stats.json"), stats)
    write_resolved_config(cfg, cfg.paths.out_dir)
    return stats


def cmd_calibrate(cfg: RunConfig, ds: Optional[Dataset] = None, f0: Optional[ParamSet] = None):
    """Bisect the mask penalty weight for the configured target coverage."""
    ds = ds if ds is not None else open_dataset(cfg)
    if f0 is None:
        path = cfg.paths.classifier or os.path.join(cfg.paths.out_dir, CLASSIFIER_FILE)
        f0 = load_classifier(path, cfg.net)
    tr, va = ds.split("train"), ds.split("val")
    cc = cfg.calibrate
    probe = TrainConfig(**{**cfg.train.__dict__, "iterations": cc.probe_iterations})
    result = calibrate_lambda(probe, cfg.score, cfg.net, tr.images, tr.labels, f0, va.images[:cc.held_out],
                              target=cfg.train.target_coverage, tolerance=cc.tolerance, low=cc.low,
                              high=cc.high, max_probes=cc.max_probes)
    write_json_atomic(os.path.join(cfg.paths.out_dir, "calibrate.json"), result.to_dict())
    write_resolved_config(cfg, cfg.paths.out_dir)
    return result


# argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="casmlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, checkpoint=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file of dotted keys")
        p.add_argument("--seed", type=int, help="overrides train.seed (and gen.seed for gen-data)")
        p.add_argument("--out", help="output directory (gen-data: dataset directory)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                       help="override one dotted config key")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
        return p

    add("gen-data", "render the shapes dataset")
    add("pretrain", "train the initial classifier")
    p = add("train", "train a mapper")
    p.add_argument("--mode", choices=("casme", "baseline"), default="casme")
    p.add_argument("--thinning", help="F, L, FL or Lp:<period>")
    p.add_argument("--lambda", dest="lambda_r", type=float)
    p.add_argument("--checkpoint", help="initial classifier checkpoint")
    add("eval-loc", "localization metrics", checkpoint=True)
    p = add("eval-cls", "masking suite with fresh classifiers", checkpoint=True)
    p.add_argument("--suite-size", type=int)
    p = add("viz", "grid of original, masked-in, masked-out and inpainted images", checkpoint=True)
    p.add_argument("--count", type=int)
    add("stats", "mask statistics", checkpoint=True)
    p = add("calibrate", "choose the mask penalty weight for the target coverage")
    p.add_argument("--checkpoint", help="initial classifier checkpoint")
    return parser


def _parse_set(items: Sequence[str]) -> dict:
    import json

    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except ValueError:
            out[key] = raw
    return out


def resolve(args) -> RunConfig:
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["train.seed"] = args.seed
        if args.command == "gen-data":
            overrides["gen.seed"] = args.seed
    if args.out:
        overrides["paths.data_dir" if args.command == "gen-data" else "paths.out_dir"] = args.out
    if getattr(args, "thinning", None):
        overrides["train.thinning"] = args.thinning
    if getattr(args, "lambda_r", None) is not None:
        overrides["score.lambda_r"] = args.lambda_r
    if args.command in ("train", "calibrate") and args.checkpoint:
        overrides["paths.classifier"] = args.checkpoint
    return load_config(args.config, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
        cmd = args.command
        if cmd == "gen-data":
            print(cmd_gen_data(cfg))
        elif cmd == "pretrain":
            cmd_pretrain(cfg)
            print(os.path.join(cfg.paths.out_dir, CLASSIFIER_FILE))
        elif cmd == "train":
            result = cmd_train(cfg, args.mode)
            print(f"trained {len(result.metrics)} iterations into {cfg.paths.out_dir}")
        elif cmd == "eval-loc":
            r = cmd_eval_loc(cfg, args.checkpoint)
            print(f"OM {r.om:.4f} LE {r.le:.4f} F1 {r.f1:.4f}")
        elif cmd == "eval-cls":
            r = cmd_eval_cls(cfg, args.checkpoint, args.suite_size)
            print(" ".join(f"{k} {v:.4f}" for k, v in r.extra.items()))
        elif cmd == "viz":
            print(cmd_viz(cfg, args.checkpoint, args.count))
        elif cmd == "stats":
            print(" ".join(f"{k} {v:.6g}" for k, v in cmd_stats(cfg, args.checkpoint).items()))
        elif cmd == "calibrate":
            r = cmd_calibrate(cfg)
            flag = "" if r.converged else " (did not converge)"
            print(f"lambda_r {r.lambda_r:.6g} coverage {r.coverage:.4f}{flag}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, DivergenceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
