"""Run configuration: every tunable in one object, stored as flat dotted keys.

Precedence, lowest to highest: built-in defaults, the JSON config file,
command-line flags.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional

from .casme import ScoreConfig, TrainConfig
from .data import ShapesConfig
from .errors import ConfigError
from .nets import NetConfig


@dataclass
class PathsConfig:
    data_dir: str = "data"
    out_dir: str = "runs"
    classifier: str = ""


@dataclass
class GenConfig:
    seed: int = 0
    duplicated: bool = False


@dataclass
class EvalConfig:
    suite_size: int = 4
    suite_epochs: int = 20
    inpaint_radius: int = 3
    viz_count: int = 7
    alpha: float = 1.0


@dataclass
class CalibrateConfig:
    probe_iterations: int = 300
    low: float = 0.0
    high: float = 8.0
    tolerance: float = 0.1
    max_probes: int = 8
    held_out: int = 64


_SECTIONS = {
    "data": ShapesConfig,
    "gen": GenConfig,
    "net": NetConfig,
    "train": TrainConfig,
    "score": ScoreConfig,
    "paths": PathsConfig,
    "eval": EvalConfig,
    "calibrate": CalibrateConfig,
}


@dataclass
class RunConfig:
    data: ShapesConfig = field(default_factory=ShapesConfig)
    gen: GenConfig = field(default_factory=GenConfig)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    score: ScoreConfig = field(default_factory=ScoreConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    calibrate: CalibrateConfig = field(default_factory=CalibrateConfig)

    def to_flat(self) -> Dict[str, Any]:
        flat = {}
        for section in _SECTIONS:
            for key, value in asdict(getattr(self, section)).items():
                flat[f"{section}.{key}"] = list(value) if isinstance(value, tuple) else value
        return flat

    def to_json(self) -> str:
        return json.dumps(self.to_flat(), indent=1, sort_keys=True) + "\n"

    def override(self, flat: Dict[str, Any]) -> "RunConfig":
        """Return a copy with dotted keys replaced; unknown keys raise :class:`ConfigError`."""
        grouped: Dict[str, Dict[str, Any]] = {}
        for dotted, value in flat.items():
            section, _, key = dotted.partition(".")
            cls = _SECTIONS.get(section)
            if cls is None or key not in {f.name for f in fields(cls)}:
                raise ConfigError(f"unknown config key {dotted!r}")
            grouped.setdefault(section, {})[key] = value
        updates = {}
        for section, values in grouped.items():
            current = asdict(getattr(self, section))
            current.update(values)
            try:
                updates[section] = _SECTIONS[section](**current)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid {section} config: {exc}") from exc
        out = replace(self, **updates)
        out.check()
        return out

    def check(self) -> None:
        width = self.data.width * (2 if self.gen.duplicated else 1)
        if self.data.height != width:
            raise ConfigError("images must be square for the networks (duplicated images double the width)")
        side = self.data.height
        if side != self.net.input_size:
            raise ConfigError(f"net.input_size {self.net.input_size} does not match image side {side}")
        if self.data.num_classes != self.net.num_classes:
            raise ConfigError("data.num_classes and net.num_classes differ")


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    cfg = RunConfig()
    if path:
        try:
            with open(path) as fh:
                flat = json.load(fh)
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(flat, dict):
            raise ConfigError(f"config {path} must be a JSON object of dotted keys")
        cfg = cfg.override(flat)
    if overrides:
        cfg = cfg.override(overrides)
    cfg.check()
    return cfg


DESK_PRESET = {
    "data.height": 32,
    "data.width": 32,
    "data.scale_range": [0.35, 0.7],
    "data.train_per_class": 300,
    "data.val_per_class": 20,
    "net.input_size": 32,
    "net.channels": [8, 16, 32, 32],
    "train.iterations": 3000,
    "train.pretrain_epochs": 20,
    "score.lambda_r": 2.0,
}


def desk_config(extra: Optional[Dict[str, Any]] = None) -> RunConfig:
    """The small configuration used by the acceptance experiments."""
    return RunConfig().override({**DESK_PRESET, **(extra or {})})
