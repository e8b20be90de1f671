"""Summary statistics over collections of saliency maps."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np


class MaskStats(NamedTuple):
    mean_total_variation: float
    mean_pixel_entropy: float
    coverage_std: float

    def to_dict(self) -> dict:
        return self._asdict()


def total_variation(m: np.ndarray) -> float:
    """Anisotropic TV: summed absolute differences between 4-neighbors."""
    m = np.asarray(m, dtype=np.float64)
    return float(np.abs(np.diff(m, axis=0)).sum() + np.abs(np.diff(m, axis=1)).sum())


def _xlogx(p):
    safe = np.where(p > 0.0, p, 1.0)
    return np.where(p > 0.0, p * np.log(safe), 0.0)


def pixel_entropy(m: np.ndarray) -> float:
    """Mean per-pixel binary entropy in nats (``0 log 0 = 0``)."""
    p = np.clip(np.asarray(m, dtype=np.float64), 0.0, 1.0)
    return float(np.mean(-(_xlogx(p) + _xlogx(1.0 - p))))


def mask_statistics(maps: Sequence[np.ndarray]) -> MaskStats:
    """TV and pixel entropy averaged over maps, and the spread of mean coverage."""
    maps = list(maps)
    if len(maps) < 2:
        raise ValueError("mask_statistics needs at least 2 maps for a standard deviation")
    tv = float(np.mean([total_variation(m) for m in maps]))
    ent = float(np.mean([pixel_entropy(m) for m in maps]))
    cov = np.array([np.mean(m) for m in maps])
    return MaskStats(tv, ent, float(np.std(cov, ddof=1)))
