"""Bisection on the mask penalty weight to hit a target mean coverage."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import List, Tuple

import numpy as np

from .. import nets
from ..autodiff import ParamSet, Tensor
from .objectives import ScoreConfig
from .train import TrainConfig, train_casme

log = logging.getLogger(__name__)


@dataclass
class CalibrationResult:
    lambda_r: float
    coverage: float
    converged: bool
    probes: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def probe_coverage(lambda_r: float, cfg: TrainConfig, scfg: ScoreConfig, net_cfg: nets.NetConfig,
                   images: np.ndarray, labels: np.ndarray, f0: ParamSet, held_out: np.ndarray) -> float:
    """Mean continuous-mask coverage on ``held_out`` after a short run at ``lambda_r``."""
    result = train_casme(cfg, replace(scfg, lambda_r=float(lambda_r)), net_cfg, images, labels, f0)
    return float(nets.map_saliency(result.mapper, Tensor(held_out), net_cfg, frozen=True).data.mean())


def calibrate_lambda(cfg: TrainConfig, scfg: ScoreConfig, net_cfg: nets.NetConfig, images: np.ndarray,
                     labels: np.ndarray, f0: ParamSet, held_out: np.ndarray, target: float = 0.5,
                     tolerance: float = 0.1, low: float = 0.0, high: float = 8.0,
                     max_probes: int = 8) -> CalibrationResult:
    """Bisect ``lambda_r`` in ``[low, high]`` until probe coverage is within ``tolerance`` of ``target``.

    Coverage is assumed non-increasing in ``lambda_r``.  When the interval
    does not bracket the target the nearer endpoint is returned with
    ``converged=False``.  Bisection is geometric once the lower end is positive.
    """
    probes: List[Tuple[float, float]] = []

    def run(lam: float) -> float:
        cov = probe_coverage(lam, cfg, scfg, net_cfg, images, labels, f0, held_out)
        probes.append((float(lam), cov))
        log.info("calibration probe lambda_r=%.6g coverage=%.4f", lam, cov)
        return cov

    cov_lo, cov_hi = run(low), run(high)
    for lam, cov in ((low, cov_lo), (high, cov_hi)):
        if abs(cov - target) <= tolerance:
            return CalibrationResult(lam, cov, True, probes)
    if not cov_hi < target < cov_lo:
        lam, cov = (low, cov_lo) if cov_lo <= target else (high, cov_hi)
        log.warning("lambda_r bisection failed to bracket coverage %.2f; returning boundary %g", target, lam)
        return CalibrationResult(lam, cov, False, probes)

    best = min(probes, key=lambda p: abs(p[1] - target))
    for _ in range(max(0, max_probes - 2)):
        mid = float(np.sqrt(low * high)) if low > 0 else 0.5 * (low + high)
        cov = run(mid)
        if abs(cov - target) < abs(best[1] - target):
            best = (mid, cov)
        if abs(cov - target) <= tolerance:
            return CalibrationResult(mid, cov, True, probes)
        if cov > target:
            low = mid
        else:
            high = mid
    log.warning("lambda_r bisection exhausted its probe budget")
    return CalibrationResult(best[0], best[1], False, probes)
