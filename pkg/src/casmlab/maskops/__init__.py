"""Operations on saliency maps after the network: binarize, localize, inpaint, summarize."""

from .core import BBox, discretize, iou, largest_component, predicted_box, random_mask, tightest_bbox
from .inpaint import inpaint_telea
from .stats import MaskStats, mask_statistics, pixel_entropy, total_variation

__all__ = [
    "BBox",
    "discretize",
    "iou",
    "largest_component",
    "predicted_box",
    "random_mask",
    "tightest_bbox",
    "inpaint_telea",
    "MaskStats",
    "mask_statistics",
    "pixel_entropy",
    "total_variation",
]
