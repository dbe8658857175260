"""Input validation helpers.

All image-consuming entry points funnel through these checks so that error
messages are uniform and numpy arrays of the wrong kind fail fast instead of
propagating silently.
"""

from __future__ import annotations

import numpy as np


def check_raster(image, name: str = "image") -> np.ndarray:
    """Validate an 8-bit raster image: 2-D grayscale or (H, W, 3) RGB."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise ValueError(f"{name} must be uint8, got {arr.dtype}")
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr
    raise ValueError(
        f"{name} must be (H, W) or (H, W, 3), got shape {arr.shape}"
    )


def check_rgb(image, name: str = "image") -> np.ndarray:
    """Validate a 3-channel 8-bit image."""
    arr = check_raster(image, name)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have 3 channels, got 1")
    return arr


def check_label_map(labels, name: str = "labels") -> np.ndarray:
    """Validate an instance label map: 2-D, integer, all values >= 0."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must have an integer dtype, got {arr.dtype}")
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} contains negative labels")
    return arr


def check_mask(mask, name: str = "mask") -> np.ndarray:
    """Coerce a 2-D array to a boolean mask (nonzero = foreground)."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr.astype(bool)


def check_same_shape(a: np.ndarray, b: np.ndarray,
                     name_a: str = "first input",
                     name_b: str = "second input") -> None:
    """Require identical height/width (and channel count if present)."""
    if a.shape != b.shape:
        raise ValueError(
            f"{name_a} shape {a.shape} does not match {name_b} shape {b.shape}"
        )
