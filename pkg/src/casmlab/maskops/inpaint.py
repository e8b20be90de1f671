"""Fast-marching (Telea) inpainting."""

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..errors import ShapeError


def inpaint_telea(image: np.ndarray, mask: np.ndarray, radius: int = 3, full_output: bool = False):
    """Reconstruct ``image`` where ``mask`` is nonzero.

    Masked pixels are filled in order of their distance from the mask
    boundary; each becomes a weighted average of the already known pixels
    within ``radius``, weighted by direction (alignment with the distance
    gradient), inverse squared distance, and level-set proximity.  Pixels
    outside the mask are returned unchanged.

    ``image`` is ``[C, H, W]`` or ``[H, W]``.  With ``full_output`` the
    result is ``(image, info)`` where ``info["degenerate"]`` reports that the
    whole image was masked and got filled with its mean.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    if img.ndim != 3:
        raise ShapeError(f"inpaint_telea expects [C,H,W] or [H,W], got {np.shape(image)}")
    m = np.asarray(mask)
    if m.shape != img.shape[1:]:
        raise ShapeError(f"mask {m.shape} does not match image {img.shape[1:]}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    out, degenerate = _kernels.telea_inpaint(img, (m != 0).astype(np.uint8), int(radius))
    if squeeze:
        out = out[0]
    if full_output:
        return out, {"degenerate": bool(degenerate)}
    return out
