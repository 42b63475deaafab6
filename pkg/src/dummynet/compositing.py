"""Alpha compositing of generated foreground into real background."""
from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


def composite(mask, fg, bg):
    """Per-pixel convex blend: mask * fg + (1 - mask) * bg.

    ``mask`` is (H, W) in [0, 1]; ``fg`` and ``bg`` are image arrays whose
    leading spatial dims match the mask. Works on numpy arrays and torch
    tensors alike; inputs in [0, 1] give an output in [0, 1].
    """
    if fg.shape != bg.shape:
        raise ShapeMismatch(f"foreground {fg.shape} vs background {bg.shape}")
    m = mask
    if m.shape != fg.shape:
        if m.shape == fg.shape[:2] and fg.ndim == 3:        # (H, W) vs (H, W, C)
            m = m[..., None]
        elif m.shape == fg.shape[-2:] and fg.ndim >= 3:     # (H, W) vs (..., H, W)
            m = m.reshape((1,) * (fg.ndim - 2) + m.shape)
        else:
            raise ShapeMismatch(f"mask {mask.shape} vs image {fg.shape}")
    return m * fg + (1 - m) * bg


def validate_mask(mask: np.ndarray) -> np.ndarray:
    """Check the [0, 1] and finiteness contract of a soft mask."""
    mask = np.asarray(mask)
    if not np.isfinite(mask).all():
        raise ValueError("mask has non-finite entries")
    if mask.min() < 0 or mask.max() > 1:
        raise ValueError("mask values must lie in [0, 1]")
    return mask
