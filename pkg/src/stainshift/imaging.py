"""Raster image primitives: color conversion, patch sampling, tiling, I/O.

Images are plain numpy arrays: uint8, shape (H, W) for grayscale or
(H, W, 3) for RGB. Label maps are 2-D integer arrays with 0 = background.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import imageio.v3 as iio
import numpy as np
import tifffile

from .errors import DataError
from .validation import check_label_map, check_raster, check_rgb

LABEL_DTYPE = np.int32


@dataclass(frozen=True)
class PatchSpec:
    """A square crop: top-left corner (row, col) and side length in pixels."""

    row: int
    col: int
    size: int

    def __post_init__(self):
        if self.row < 0 or self.col < 0:
            raise ValueError("patch offsets must be non-negative")
        if self.size < 1:
            raise ValueError("patch size must be >= 1")


@dataclass(frozen=True)
class TilePlan:
    """Tiling of an (height x width) image into equal-size square tiles."""

    tiles: tuple[PatchSpec, ...]
    overlap: int
    height: int
    width: int


def rgb_to_hsi(image) -> np.ndarray:
    """Convert an RGB image to HSI.

    Returns a float64 array of shape (H, W, 3) with channels
    (hue in degrees [0, 360), saturation in [0, 1], intensity in [0, 1]).
    Achromatic pixels (R = G = B, including black) get hue 0 and saturation 0.
    """
    rgb = check_rgb(image).astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]

    total = r + g + b
    intensity = total / (3.0 * 255.0)

    minimum = np.minimum(np.minimum(r, g), b)
    with np.errstate(invalid="ignore", divide="ignore"):
        saturation = np.where(total > 0.0, 1.0 - 3.0 * minimum / total, 0.0)
    saturation = np.clip(saturation, 0.0, 1.0)

    # Trigonometric hue. The denominator is zero exactly when R = G = B.
    num = 0.5 * ((r - g) + (r - b))
    den = np.sqrt((r - g) ** 2 + (r - b) * (g - b))
    achromatic = den == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_arg = np.clip(np.where(achromatic, 1.0, num / den), -1.0, 1.0)
    theta = np.degrees(np.arccos(cos_arg))
    hue = np.where(b > g, 360.0 - theta, theta)
    hue = np.where(achromatic, 0.0, hue) % 360.0
    saturation = np.where(achromatic, 0.0, saturation)

    return np.stack([hue, saturation, intensity], axis=-1)


def sample_patches(image, size: int, count: int, seed: int,
                   min_saturation: float | None = None) -> list[PatchSpec]:
    """Sample `count` patch positions uniformly over legal top-left corners.

    Deterministic for a fixed (image dimensions, size, count, seed). With
    `min_saturation` set, patches whose mean HSI saturation falls below the
    threshold are rejected and redrawn (tissue filter; off by default).
    """
    arr = check_raster(image)
    if count < 0:
        raise ValueError("count must be >= 0")
    h, w = arr.shape[:2]
    if size > min(h, w):
        raise ValueError(
            f"patch size {size} exceeds image dimensions {h}x{w}"
        )
    rng = np.random.default_rng(seed)
    max_row = h - size
    max_col = w - size

    sat = None
    if min_saturation is not None:
        sat = rgb_to_hsi(arr)[..., 1]

    specs: list[PatchSpec] = []
    attempts = 0
    limit = max(1000, 1000 * count)
    while len(specs) < count:
        if attempts >= limit:
            raise DataError(
                "tissue filter rejected too many patches "
                f"(min_saturation={min_saturation})"
            )
        row = int(rng.integers(0, max_row + 1))
        col = int(rng.integers(0, max_col + 1))
        attempts += 1
        if sat is not None:
            if sat[row:row + size, col:col + size].mean() < min_saturation:
                continue
        specs.append(PatchSpec(row, col, size))
    return specs


def extract_patch(image, spec: PatchSpec) -> np.ndarray:
    """Crop the patch described by `spec`; channels are preserved."""
    arr = check_raster(image)
    h, w = arr.shape[:2]
    if spec.row + spec.size > h or spec.col + spec.size > w:
        raise ValueError(f"patch {spec} out of bounds for {h}x{w} image")
    return arr[spec.row:spec.row + spec.size,
               spec.col:spec.col + spec.size].copy()


def _axis_positions(extent: int, tile: int, stride: int) -> list[int]:
    positions = list(range(0, extent - tile + 1, stride))
    if positions[-1] != extent - tile:
        positions.append(extent - tile)  # border tile shifted inward
    return positions


def plan_tiles(height: int, width: int, tile_size: int,
               overlap: int) -> TilePlan:
    """Plan a full-coverage tiling with at least `overlap` pixels of overlap
    between adjacent tiles (border tiles are shifted inward, never out)."""
    if tile_size > min(height, width):
        raise ValueError(
            f"tile size {tile_size} exceeds image dimensions {height}x{width}"
        )
    if not 0 <= overlap < tile_size:
        raise ValueError("overlap must satisfy 0 <= overlap < tile_size")
    stride = tile_size - overlap
    tiles = tuple(
        PatchSpec(r, c, tile_size)
        for r in _axis_positions(height, tile_size, stride)
        for c in _axis_positions(width, tile_size, stride)
    )
    return TilePlan(tiles=tiles, overlap=overlap, height=height, width=width)


def stitch_tiles(plan: TilePlan, tiles: list[np.ndarray]) -> np.ndarray:
    """Reassemble tiles into the source geometry, averaging overlaps."""
    if len(tiles) != len(plan.tiles):
        raise ValueError(
            f"plan has {len(plan.tiles)} tiles but {len(tiles)} were given"
        )
    first = check_raster(tiles[0], "tile")
    channels = 1 if first.ndim == 2 else first.shape[2]
    shape = (plan.height, plan.width) if channels == 1 else \
        (plan.height, plan.width, channels)
    acc = np.zeros(shape, dtype=np.float64)
    hits = np.zeros((plan.height, plan.width), dtype=np.float64)
    for spec, tile in zip(plan.tiles, tiles):
        arr = check_raster(tile, "tile")
        if arr.shape[:2] != (spec.size, spec.size) or arr.ndim != first.ndim:
            raise ValueError(f"tile shape {arr.shape} does not match {spec}")
        sl = (slice(spec.row, spec.row + spec.size),
              slice(spec.col, spec.col + spec.size))
        acc[sl] += arr
        hits[sl] += 1.0
    if hits.min() == 0:
        raise ValueError("tile plan does not cover the full image")
    if channels != 1:
        hits = hits[..., None]
    out = acc / hits
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def relabel_sequential(labels) -> np.ndarray:
    """Map nonzero labels onto {1..K} (ascending by old label); background
    stays 0 and the pixel partition is unchanged."""
    arr = check_label_map(labels)
    uniq, inverse = np.unique(arr, return_inverse=True)
    inverse = inverse.ravel()
    new_ids = np.zeros(uniq.size, dtype=LABEL_DTYPE)
    nonzero = uniq != 0
    new_ids[nonzero] = np.arange(1, int(nonzero.sum()) + 1, dtype=LABEL_DTYPE)
    return new_ids[inverse].reshape(arr.shape)


# ---------------------------------------------------------------------------
# File I/O. Images: 8-bit PNG/TIFF. Label maps: 16-bit grayscale PNG.
# ---------------------------------------------------------------------------

IMAGE_EXTENSIONS = (".png", ".tif", ".tiff")


def read_image(path) -> np.ndarray:
    """Read an 8-bit PNG or TIFF image as uint8 (H, W) or (H, W, 3)."""
    path = Path(path)
    try:
        if path.suffix.lower() in (".tif", ".tiff"):
            arr = tifffile.imread(path)
        else:
            arr = iio.imread(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    arr = np.asarray(arr)
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[..., :3]  # drop alpha
    if arr.dtype != np.uint8:
        raise DataError(f"{path} is not an 8-bit image (dtype {arr.dtype})")
    return check_raster(arr, str(path))


def write_image(path, image) -> None:
    arr = check_raster(image)
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    if path.suffix.lower() in (".tif", ".tiff"):
        tifffile.imwrite(path, arr)
    else:
        iio.imwrite(path, arr)


def read_label_map(path) -> np.ndarray:
    """Read a label map stored as 16-bit grayscale PNG."""
    path = Path(path)
    try:
        arr = iio.imread(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read label map {path}: {exc}") from exc
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise DataError(f"{path} is not a single-channel label map")
    return arr.astype(LABEL_DTYPE)


def write_label_map(path, labels) -> None:
    arr = check_label_map(labels)
    if arr.size and arr.max() > np.iinfo(np.uint16).max:
        raise ValueError("label map exceeds 16-bit range")
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    iio.imwrite(path, arr.astype(np.uint16))
