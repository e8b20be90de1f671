"""Synthetic shapes datasets, duplicated-halves construction, class splits, image I/O.

A :class:`Dataset` holds images in memory as float64 ``[N, 3, H, W]`` with
values ``k/255`` so that writing PNGs and reading them back is lossless.  On
disk a dataset is a directory with ``manifest.json`` and one PNG per record.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np
from PIL import Image

from .errors import ConfigError

MANIFEST_VERSION = 1
SHAPES = ("square", "circle", "triangle", "cross", "ring")
FILLS = ("solid", "hatched")
SUBSET_NAMES = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
PAPER_SUBSET_FRACTIONS = (0.05, 0.05, 0.10, 0.30, 0.30, 0.20)


@dataclass
class ShapesConfig:
    height: int = 64
    width: int = 64
    num_classes: int = 10
    scale_range: tuple = (0.25, 0.6)
    noise_center: float = 0.5
    noise_amplitude: float = 0.15
    color_low: tuple = (0.0, 0.2)
    color_high: tuple = (0.8, 1.0)
    hatch_period: int = 4
    train_per_class: int = 100
    val_per_class: int = 20

    def __post_init__(self):
        self.scale_range = tuple(self.scale_range)
        self.color_low = tuple(self.color_low)
        self.color_high = tuple(self.color_high)
        if not 2 <= self.num_classes <= len(SHAPES) * len(FILLS):
            raise ConfigError(f"num_classes must be in [2, {len(SHAPES) * len(FILLS)}]")
        lo, hi = self.scale_range
        if not 0 < lo <= hi < 1:
            raise ConfigError(f"scale_range must satisfy 0 < lo <= hi < 1, got {self.scale_range}")
        if self.height < 8 or self.width < 8:
            raise ConfigError("images must be at least 8x8")

    def class_names(self) -> List[str]:
        names = [f"{s}-{f}" for f in FILLS for s in SHAPES]
        return names[: self.num_classes]


@dataclass
class Dataset:
    """In-memory dataset plus the metadata recorded in the manifest."""

    images: np.ndarray
    labels: np.ndarray
    boxes: List[List[tuple]]
    splits: List[str]
    subsets: List[str]
    classes: List[str]
    seed: int
    paths: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.paths:
            self.paths = [f"images/{i:06d}.png" for i in range(len(self.labels))]
        if not self.subsets:
            self.subsets = [""] * len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def select(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            images=self.images[idx],
            labels=self.labels[idx],
            boxes=[self.boxes[i] for i in idx],
            splits=[self.splits[i] for i in idx],
            subsets=[self.subsets[i] for i in idx],
            classes=list(self.classes),
            seed=self.seed,
            paths=[self.paths[i] for i in idx],
        )

    def split(self, name: str) -> "Dataset":
        return self.select([i for i, s in enumerate(self.splits) if s == name])

    def with_classes(self, class_ids) -> "Dataset":
        keep = set(int(c) for c in class_ids)
        return self.select([i for i, y in enumerate(self.labels) if int(y) in keep])

    # manifest I/O ---------------------------------------------------------

    def manifest(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "seed": self.seed,
            "classes": list(self.classes),
            "records": [
                {
                    "path": self.paths[i],
                    "class": int(self.labels[i]),
                    "boxes": [list(map(int, b)) for b in self.boxes[i]],
                    "split": self.splits[i],
                    "subset": self.subsets[i],
                }
                for i in range(len(self))
            ],
        }

    def save(self, out_dir: str) -> str:
        """Write PNGs and ``manifest.json`` under ``out_dir``; return the manifest path."""
        os.makedirs(out_dir, exist_ok=True)
        for path, img in zip(self.paths, self.images):
            full = os.path.join(out_dir, path)
            os.makedirs(os.path.dirname(full), exist_ok=True)
            save_image(img, full)
        manifest_path = os.path.join(out_dir, "manifest.json")
        write_json_atomic(manifest_path, self.manifest())
        return manifest_path


def write_json_atomic(path: str, obj) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_dataset(manifest_path: str) -> Dataset:
    """Read a manifest and every image it references."""
    try:
        with open(manifest_path) as fh:
            man = json.load(fh)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if man.get("version") != MANIFEST_VERSION:
        raise OSError(f"{manifest_path}: unsupported manifest version {man.get('version')}")
    root = os.path.dirname(os.path.abspath(manifest_path))
    recs = man["records"]
    images = np.stack([load_image(os.path.join(root, r["path"])) for r in recs]) if recs else np.zeros((0, 3, 1, 1))
    return Dataset(
        images=images,
        labels=np.array([r["class"] for r in recs], dtype=np.int64),
        boxes=[[tuple(b) for b in r["boxes"]] for r in recs],
        splits=[r["split"] for r in recs],
        subsets=[r.get("subset", "") for r in recs],
        classes=list(man["classes"]),
        seed=int(man.get("seed", 0)),
        paths=[r["path"] for r in recs],
    )


# image I/O ------------------------------------------------------------------


def to_uint8(img: np.ndarray) -> np.ndarray:
    """``[3, H, W]`` floats in [0, 1] to ``[H, W, 3]`` bytes, rounding half up."""
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5)
    return q.astype(np.uint8).transpose(1, 2, 0)


def save_image(img: np.ndarray, path: str) -> None:
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (3,) + arr.shape)
    Image.fromarray(np.ascontiguousarray(to_uint8(arr)), mode="RGB").save(path, format="PNG")


def load_image(path: str) -> np.ndarray:
    """Read an 8-bit RGB PNG as float64 ``[3, H, W]`` with values ``v/255``."""
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise OSError(f"expected an RGB image, got mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except OSError as exc:
        raise OSError(f"cannot load image {path}: {exc}") from exc
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid so PNG round trips are exact."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5) / 255.0


# shape rendering -------------------------------------------------------------


def shape_mask(kind: str, side: int) -> np.ndarray:
    """Boolean ``[side, side]`` raster of a shape sampled at pixel centers."""
    c = (np.arange(side) + 0.5) / side - 0.5
    u, v = np.meshgrid(c, c, indexing="ij")
    r2 = u * u + v * v
    if kind == "square":
        m = (np.abs(u) <= 0.45) & (np.abs(v) <= 0.45)
    elif kind == "circle":
        m = r2 <= 0.45 ** 2
    elif kind == "triangle":
        depth = u + 0.45
        m = (depth >= 0) & (u <= 0.45) & (np.abs(v) <= 0.5 * depth)
    elif kind == "cross":
        arm = 0.16
        m = ((np.abs(u) <= arm) & (np.abs(v) <= 0.45)) | ((np.abs(v) <= arm) & (np.abs(u) <= 0.45))
    elif kind == "ring":
        m = (r2 <= 0.45 ** 2) & (r2 >= 0.26 ** 2)
    else:
        raise ConfigError(f"unknown shape {kind!r}")
    return m


def _hatch(mask: np.ndarray, period: int) -> np.ndarray:
    """Outline plus diagonal stripes of ``mask``."""
    h, w = mask.shape
    padded = np.pad(mask, 1)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    outline = mask & ~interior
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    stripes = ((ii + jj) // max(period // 2, 1)) % 2 == 0
    return outline | (mask & stripes)


def raster_bbox(mask: np.ndarray):
    """Half-open ``(r0, c0, r1, c1)`` of the nonzero pixels, found by a full scan."""
    rows = [i for i in range(mask.shape[0]) if mask[i].any()]
    cols = [j for j in range(mask.shape[1]) if mask[:, j].any()]
    if not rows:
        return None
    return (rows[0], cols[0], rows[-1] + 1, cols[-1] + 1)


def _record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def render_sample(cfg: ShapesConfig, class_id: int, rng: np.random.Generator):
    """Return ``(image [3,H,W], box)`` for one object of ``class_id``."""
    kind = SHAPES[class_id % len(SHAPES)]
    hatched = class_id >= len(SHAPES)
    h, w = cfg.height, cfg.width
    lo, hi = cfg.scale_range
    side = max(4, int(round(rng.uniform(lo, hi) * min(h, w))))
    r0 = int(rng.integers(0, h - side + 1))
    c0 = int(rng.integers(0, w - side + 1))
    local = shape_mask(kind, side)
    if hatched:
        local = _hatch(local, cfg.hatch_period)
    drawn = np.zeros((h, w), dtype=bool)
    drawn[r0:r0 + side, c0:c0 + side] = local

    img = cfg.noise_center + rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude, size=(3, h, w))
    bright = rng.random(3) < 0.5
    # At least one channel must contrast in each direction-agnostic sense.
    color = np.where(bright, rng.uniform(*cfg.color_high, size=3), rng.uniform(*cfg.color_low, size=3))
    img[:, drawn] = color[:, None]
    box = raster_bbox(drawn)
    if box is None:
        raise AssertionError("rendered shape has no pixels")
    return quantize(img), box


def gen_shapes(cfg: ShapesConfig, seed: int) -> Dataset:
    """Generate a class-balanced train/val dataset, deterministic in ``seed``."""
    images, labels, boxes, splits = [], [], [], []
    index = 0
    for split, per_class in (("train", cfg.train_per_class), ("val", cfg.val_per_class)):
        for k in range(per_class):
            for cls in range(cfg.num_classes):
                img, box = render_sample(cfg, cls, _record_rng(seed, index))
                images.append(img)
                labels.append(cls)
                boxes.append([box])
                splits.append(split)
                index += 1
    arr = np.stack(images) if images else np.zeros((0, 3, cfg.height, cfg.width))
    return Dataset(
        images=arr,
        labels=np.array(labels, dtype=np.int64),
        boxes=boxes,
        splits=splits,
        subsets=[""] * len(labels),
        classes=cfg.class_names(),
        seed=seed,
    )


def duplicate_halves(ds: Dataset, target_width: Optional[int] = None) -> Dataset:
    """Concatenate every image with a copy of itself along the width.

    Ground truth keeps the left box and adds its translate into the right half.
    """
    w = ds.images.shape[3]
    if target_width is not None:
        if target_width % 2:
            raise ConfigError(f"target width {target_width} is odd")
        if target_width != 2 * w:
            raise ConfigError(f"source width {w} is not half of target width {target_width}")
    images = np.concatenate([ds.images, ds.images], axis=3)
    boxes = []
    for rec in ds.boxes:
        both = [tuple(b) for b in rec]
        both += [(r0, c0 + w, r1, c1 + w) for r0, c0, r1, c1 in rec]
        boxes.append(both)
    return replace(ds, images=images, boxes=boxes, paths=list(ds.paths))


def mirror_symmetry(img: np.ndarray) -> float:
    """Fraction of pixels equal to their horizontal-flip partner (1.0 for duplicated halves)."""
    flipped_halves = np.concatenate([img[..., img.shape[-1] // 2:], img[..., : img.shape[-1] // 2]], axis=-1)
    return float(np.mean(np.all(img == flipped_halves, axis=0)))


def subset_sizes(num_classes: int, fractions: Sequence[float]) -> List[int]:
    """Class counts per subset: one class each, the rest by highest averages.

    Each subset is seeded with one class; each remaining class goes to the
    subset maximizing ``quota / (count + 1)`` (ties to the earlier subset),
    where ``quota = fraction * num_classes``.  Exact rational arithmetic.
    """
    k = len(fractions)
    if k > num_classes:
        raise ConfigError(f"{k} subsets requested for only {num_classes} classes")
    fr = [Fraction(str(f)) for f in fractions]
    if abs(float(sum(fr)) - 1.0) > 1e-6:
        raise ConfigError(f"fractions sum to {float(sum(fr))}, expected 1")
    quotas = [f * num_classes for f in fr]
    counts = [1] * k
    for _ in range(num_classes - k):
        best = max(range(k), key=lambda i: (quotas[i] / (counts[i] + 1), -i))
        counts[best] += 1
    return counts


def split_classes(ds: Dataset, fractions: Sequence[float], seed: int = 0) -> tuple:
    """Tag records with disjoint class subsets A, B, ...; returns ``(dataset, {name: class ids})``."""
    c = len(ds.classes)
    counts = subset_sizes(c, fractions)
    order = np.random.default_rng(seed).permutation(c)
    groups = {}
    start = 0
    for name, n in zip(SUBSET_NAMES, counts):
        groups[name] = sorted(int(x) for x in order[start:start + n])
        start += n
    owner = {cls: name for name, ids in groups.items() for cls in ids}
    tagged = replace(ds, subsets=[owner[int(y)] for y in ds.labels], paths=list(ds.paths))
    return tagged, groups


# external images -------------------------------------------------------------

RESIZE_POLICIES = ("center_crop", "direct")


def _scale_box(box, sy: float, sx: float):
    r0, c0, r1, c1 = box
    return (int(np.floor(r0 * sy)), int(np.floor(c0 * sx)), int(np.ceil(r1 * sy)), int(np.ceil(c1 * sx)))


def prepare_external(img: np.ndarray, boxes: Sequence[tuple], size: int, policy: str = "center_crop"):
    """Resize an external ``[3, H, W]`` image and its boxes to ``size x size``.

    ``center_crop`` scales the shorter edge to ``size`` and keeps the central
    square; boxes are clipped and those left empty are dropped.  ``direct``
    resizes both edges to ``size``, distorting the aspect ratio.
    """
    from .autodiff import Tensor, ops

    if policy not in RESIZE_POLICIES:
        raise ConfigError(f"unknown resize policy {policy!r}; expected one of {RESIZE_POLICIES}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[1:]
    if policy == "direct":
        out_h, out_w = size, size
    else:
        s = size / min(h, w)
        out_h, out_w = max(size, int(round(h * s))), max(size, int(round(w * s)))
    resized = ops.bilinear_resize(Tensor(img[None]), out_h, out_w).data[0]
    sy, sx = out_h / h, out_w / w
    top, left = (out_h - size) // 2, (out_w - size) // 2
    out_boxes = []
    for b in boxes:
        r0, c0, r1, c1 = _scale_box(b, sy, sx)
        r0, r1 = max(r0 - top, 0), min(r1 - top, size)
        c0, c1 = max(c0 - left, 0), min(c1 - left, size)
        if r1 > r0 and c1 > c0:
            out_boxes.append((r0, c0, r1, c1))
    return quantize(resized[:, top:top + size, left:left + size]), out_boxes


def config_dict(cfg: ShapesConfig) -> dict:
    d = asdict(cfg)
    d["scale_range"] = list(cfg.scale_range)
    d["color_low"] = list(cfg.color_low)
    d["color_high"] = list(cfg.color_high)
    return d
