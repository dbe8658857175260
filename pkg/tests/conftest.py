"""Shared synthetic-data builders and brute-force oracles for the suite."""

from __future__ import annotations

import numpy as np
import pytest


# ---------------------------------------------------------------------------
# Synthetic imagery
# ---------------------------------------------------------------------------

def disc_mask(shape, center, radius) -> np.ndarray:
    rows, cols = np.indices(shape)
    return (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius ** 2


def ellipse_mask(shape, center, axes, angle_deg) -> np.ndarray:
    rows, cols = np.indices(shape)
    dy = rows - center[0]
    dx = cols - center[1]
    theta = np.deg2rad(angle_deg)
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return (u / axes[1]) ** 2 + (v / axes[0]) ** 2 <= 1.0


def paint(shape, background, regions) -> np.ndarray:
    """Flat-color uint8 RGB image: `regions` is a list of (mask, color)."""
    img = np.empty((*shape, 3), dtype=np.uint8)
    img[:] = background
    for mask, color in regions:
        img[mask] = color
    return img


def disc_scene(shape, discs, background=(255, 255, 255)):
    """Image plus ground-truth label map for a list of
    (center_row, center_col, radius, color) discs."""
    regions = []
    labels = np.zeros(shape, dtype=np.int32)
    for i, (cy, cx, radius, color) in enumerate(discs, start=1):
        mask = disc_mask(shape, (cy, cx), radius)
        regions.append((mask, color))
        labels[mask] = i
    return paint(shape, background, regions), labels


# Palettes for the two synthetic stain domains.
DOMAIN_A_BG = (235, 195, 205)     # pink background
DOMAIN_A_BLOB = (75, 45, 60)      # dark blobs
DOMAIN_B_BG = (248, 246, 250)     # near-white background
DOMAIN_B_BLOB = (115, 60, 150)    # purple blobs


def blob_geometry(rng, size: int, n_blobs: int):
    """Non-overlapping ellipse masks with their centroids."""
    masks = []
    centers = []
    attempts = 0
    while len(masks) < n_blobs and attempts < 200:
        attempts += 1
        cy = rng.uniform(12, size - 12)
        cx = rng.uniform(12, size - 12)
        if any((cy - c[0]) ** 2 + (cx - c[1]) ** 2 < 22 ** 2
               for c in centers):
            continue
        axes = rng.uniform(5.0, 8.5, size=2)
        mask = ellipse_mask((size, size), (cy, cx), axes,
                            rng.uniform(0, 180))
        masks.append(mask)
        centers.append((cy, cx))
    return masks


def render_blob_image(masks, size: int, background, blob_color,
                      rng) -> np.ndarray:
    img = paint((size, size), background, [(m, blob_color) for m in masks])
    noise = rng.integers(-6, 7, size=img.shape)
    return np.clip(img.astype(np.int16) + noise, 0, 255).astype(np.uint8)


def make_blob_domains(n_per_domain: int, size: int, seed: int):
    """Two synthetic stain domains sharing blob geometry statistics.

    Returns (patches_a, patches_b, held_out) where held_out is a list of
    (image_a, blob_centroids) pairs for structure-preservation checks.
    """
    rng = np.random.default_rng(seed)
    patches_a, patches_b = [], []
    for _ in range(n_per_domain):
        masks = blob_geometry(rng, size, int(rng.integers(2, 4)))
        patches_a.append(render_blob_image(
            masks, size, DOMAIN_A_BG, DOMAIN_A_BLOB, rng))
        masks = blob_geometry(rng, size, int(rng.integers(2, 4)))
        patches_b.append(render_blob_image(
            masks, size, DOMAIN_B_BG, DOMAIN_B_BLOB, rng))
    held_out = []
    for _ in range(12):
        masks = blob_geometry(rng, size, int(rng.integers(2, 4)))
        image = render_blob_image(masks, size, DOMAIN_A_BG, DOMAIN_A_BLOB,
                                  rng)
        cents = [tuple(np.argwhere(m).mean(axis=0)) for m in masks]
        held_out.append((image, cents))
    return patches_a, patches_b, held_out


def random_label_map(rng, height: int, width: int,
                     max_instances: int) -> np.ndarray:
    """Voronoi-style random instance map with up to `max_instances` labels."""
    k = int(rng.integers(0, max_instances + 1))
    labels = np.zeros((height, width), dtype=np.int32)
    if k == 0:
        return labels
    seeds_r = rng.uniform(0, height, k)
    seeds_c = rng.uniform(0, width, k)
    rows, cols = np.indices((height, width))
    dist = ((rows[..., None] - seeds_r) ** 2
            + (cols[..., None] - seeds_c) ** 2)
    labels = (np.argmin(dist, axis=-1) + 1).astype(np.int32)
    radius = rng.uniform(height / 6, height / 1.5)
    labels[dist.min(axis=-1) > radius ** 2] = 0
    return labels


# ---------------------------------------------------------------------------
# Brute-force oracles
# ---------------------------------------------------------------------------

def otsu_brute_force(histogram) -> int:
    """256-candidate search maximizing between-class variance (scaled by the
    squared total count); lowest level wins ties."""
    hist = [int(v) for v in histogram]
    total = sum(hist)
    s_all = sum(c * i for i, c in enumerate(hist))
    best_level, best_score = 0, -1.0
    w0 = 0
    s0 = 0
    for t in range(256):
        w0 += hist[t]
        s0 += hist[t] * t
        w1 = total - w0
        s1 = s_all - s0
        if w0 == 0 or w1 == 0:
            score = 0.0
        else:
            num = float(s0 * w1 - s1 * w0)
            score = num * num / float(w0 * w1)
        if score > best_score:
            best_score, best_level = score, t
    return best_level


def pairwise_iou_table(pred, gt) -> dict:
    """All overlapping (pred label, gt label) -> IoU, by direct pixel loops
    over label pairs (independent of the library implementation)."""
    table = {}
    for p in np.unique(pred[pred > 0]):
        mask_p = pred == p
        for g in np.unique(gt[gt > 0]):
            mask_g = gt == g
            inter = int(np.count_nonzero(mask_p & mask_g))
            if inter:
                union = int(np.count_nonzero(mask_p | mask_g))
                table[(int(p), int(g))] = inter / union
    return table


def max_matching_count(eligible_pairs) -> int:
    """Exhaustive maximum one-to-one matching size over eligible pairs."""
    gts = sorted({g for _, g in eligible_pairs})
    by_gt = {g: sorted(p for p, gg in eligible_pairs if gg == g)
             for g in gts}

    def recurse(idx: int, used: frozenset) -> int:
        if idx == len(gts):
            return 0
        best = recurse(idx + 1, used)
        for p in by_gt[gts[idx]]:
            if p not in used:
                best = max(best, 1 + recurse(idx + 1, used | {p}))
        return best

    return recurse(0, frozenset())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
