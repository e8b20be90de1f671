"""Discretization, connected components, bounding boxes and IOU."""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .. import _kernels
from ..errors import ShapeError


class BBox(NamedTuple):
    """Half-open pixel box ``[row0, row1) x [col0, col1)``."""

    row0: int
    col0: int
    row1: int
    col1: int

    @property
    def area(self) -> int:
        return max(self.row1 - self.row0, 0) * max(self.col1 - self.col0, 0)

    def is_valid(self, height: Optional[int] = None, width: Optional[int] = None) -> bool:
        ok = 0 <= self.row0 < self.row1 and 0 <= self.col0 < self.col1
        if height is not None:
            ok = ok and self.row1 <= height
        if width is not None:
            ok = ok and self.col1 <= width
        return ok

    @classmethod
    def full(cls, height: int, width: int) -> "BBox":
        return cls(0, 0, height, width)


def discretize(saliency: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Binary mask of pixels at or above ``alpha`` times the mean intensity.

    An all-zero map yields an all-zero mask.
    """
    m = np.asarray(saliency, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"discretize expects an [H, W] map, got {m.shape}")
    mean = m.mean()
    if mean == 0.0:
        return np.zeros(m.shape, dtype=np.uint8)
    return (m >= alpha * mean).astype(np.uint8)


def largest_component(binary: np.ndarray, connectivity: int = 4) -> np.ndarray:
    """Keep only the largest connected component of ones.

    Ties go to the component whose first pixel comes first in row-major order.
    """
    b = np.asarray(binary)
    if b.ndim != 2:
        raise ShapeError(f"largest_component expects [H, W], got {b.shape}")
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, count = _kernels.label_components(b != 0, connectivity)
    if count == 0:
        return np.zeros(b.shape, dtype=np.uint8)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    sizes[0] = -1
    return (labels == int(np.argmax(sizes))).astype(np.uint8)


def tightest_bbox(binary: np.ndarray) -> Optional[BBox]:
    """Smallest half-open box containing every set pixel, or ``None`` if empty."""
    b = np.asarray(binary) != 0
    rows = np.flatnonzero(b.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(b.any(axis=0))
    return BBox(int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1)


def iou(a: BBox, b: BBox) -> float:
    inter_h = min(a.row1, b.row1) - max(a.row0, b.row0)
    inter_w = min(a.col1, b.col1) - max(a.col0, b.col0)
    inter = max(inter_h, 0) * max(inter_w, 0)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def predicted_box(saliency: np.ndarray, alpha: float = 1.0, connectivity: int = 4) -> BBox:
    """Box of the binary connected mask; the full image when the mask is empty."""
    box = tightest_bbox(largest_component(discretize(saliency, alpha), connectivity))
    if box is None:
        h, w = np.asarray(saliency).shape
        return BBox.full(h, w)
    return box


def random_mask(shape, coverage: float, seed) -> np.ndarray:
    """A uniformly placed axis-aligned rectangle covering about ``coverage`` of the image.

    The area fraction lands within 0.05 of ``coverage`` whenever the grid allows it.
    """
    if not 0.0 <= coverage <= 1.0:
        raise ValueError(f"coverage must lie in [0, 1], got {coverage}")
    h, w = shape
    out = np.zeros((h, w), dtype=np.uint8)
    if coverage == 0.0:
        return out
    if coverage == 1.0:
        out[:] = 1
        return out
    rng = np.random.default_rng(seed)
    total = h * w
    target = coverage * total
    heights = [
        rh for rh in range(1, h + 1)
        if abs(min(max(int(round(target / rh)), 1), w) * rh / total - coverage) <= 0.05
    ]
    if not heights:
        # No rectangle is close enough; take the best available.
        heights = [min(range(1, h + 1), key=lambda rh: abs(min(max(int(round(target / rh)), 1), w) * rh - target))]
    rh = heights[int(rng.integers(len(heights)))]
    rw = min(max(int(round(target / rh)), 1), w)
    r0 = int(rng.integers(0, h - rh + 1))
    c0 = int(rng.integers(0, w - rw + 1))
    out[r0:r0 + rh, c0:c0 + rw] = 1
    return out
