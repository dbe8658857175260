"""Stain-positivity detection: HSI thresholding of segmented cells and
centroid export in a challenge submission format.

A cell is positive when a sufficient fraction of its pixels falls inside a
hue window (brown DAB by default) with enough saturation and limited
intensity. Coordinates follow the detection convention: x = column,
y = row, origin at the top-left pixel center.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import rgb_to_hsi
from .validation import check_label_map, check_rgb, check_same_shape


@dataclass(frozen=True)
class PositivityThresholds:
    """HSI gate for positively stained pixels plus the per-cell vote rule.

    The hue window may wrap around 0 degrees (low > high means the window
    crosses 360 -> 0).
    """

    hue_low: float = 20.0
    hue_high: float = 50.0
    min_saturation: float = 0.1
    max_intensity: float = 0.85
    min_fraction: float = 0.3

    def __post_init__(self):
        for name in ("hue_low", "hue_high"):
            v = getattr(self, name)
            if not 0.0 <= v < 360.0:
                raise ValueError(f"{name} must lie in [0, 360)")
        for name in ("min_saturation", "max_intensity", "min_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class Detection:
    """One segmented cell: centroid in (x, y) pixels and its positivity."""

    image_id: str
    x: float
    y: float
    positive: bool
    label: int = 0


def _positive_pixel_mask(hsi: np.ndarray,
                         thresholds: PositivityThresholds) -> np.ndarray:
    hue, sat, inten = hsi[..., 0], hsi[..., 1], hsi[..., 2]
    if thresholds.hue_low <= thresholds.hue_high:
        in_window = (hue >= thresholds.hue_low) & (hue <= thresholds.hue_high)
    else:  # wrap-around window
        in_window = (hue >= thresholds.hue_low) | (hue <= thresholds.hue_high)
    # Achromatic pixels have no meaningful hue; they never pass the gate.
    return (in_window & (sat > 0.0)
            & (sat >= thresholds.min_saturation)
            & (inten <= thresholds.max_intensity))


def positive_fractions(ihc, instances,
                       thresholds: PositivityThresholds) -> dict[int, float]:
    """Fraction of positively stained pixels per instance label."""
    rgb = check_rgb(ihc, "ihc")
    labels = check_label_map(instances, "instances")
    check_same_shape(rgb[..., 0], labels, "ihc", "instances")
    positive = _positive_pixel_mask(rgb_to_hsi(rgb), thresholds)

    uniq, inverse = np.unique(labels, return_inverse=True)
    inverse = inverse.ravel()
    areas = np.bincount(inverse, minlength=uniq.size)
    hits = np.bincount(inverse, weights=positive.ravel(),
                       minlength=uniq.size)
    return {int(lab): float(hits[i] / areas[i])
            for i, lab in enumerate(uniq) if lab != 0}


def classify_positive(ihc, instances,
                      thresholds: PositivityThresholds | None = None
                      ) -> dict[int, bool]:
    """Per-instance positivity flags under the HSI thresholding rule."""
    thresholds = thresholds or PositivityThresholds()
    fractions = positive_fractions(ihc, instances, thresholds)
    return {lab: frac >= thresholds.min_fraction
            for lab, frac in fractions.items()}


def centroids(instances) -> list[tuple[int, float, float]]:
    """(label, x, y) with x/y the arithmetic mean of pixel columns/rows."""
    labels = check_label_map(instances, "instances")
    uniq, inverse = np.unique(labels, return_inverse=True)
    inverse = inverse.ravel()
    rows, cols = np.indices(labels.shape)
    areas = np.bincount(inverse, minlength=uniq.size)
    row_sum = np.bincount(inverse, weights=rows.ravel(), minlength=uniq.size)
    col_sum = np.bincount(inverse, weights=cols.ravel(), minlength=uniq.size)
    return [(int(lab), float(col_sum[i] / areas[i]),
             float(row_sum[i] / areas[i]))
            for i, lab in enumerate(uniq) if lab != 0]


def detect_positive_cells(ihc, instances,
                          thresholds: PositivityThresholds | None = None,
                          image_id: str = "image") -> list[Detection]:
    """One Detection per instance, centroid attached and positivity flagged.

    Negative cells stay in the list for the full report; the submission
    writer filters them out.
    """
    thresholds = thresholds or PositivityThresholds()
    flags = classify_positive(ihc, instances, thresholds)
    return [Detection(image_id=image_id, x=x, y=y,
                      positive=flags[lab], label=lab)
            for lab, x, y in centroids(instances)]


def positivity_report(ihc, instances,
                      thresholds: PositivityThresholds | None = None,
                      image_id: str = "image") -> list[dict]:
    """Per-instance HSI statistics and the positivity decision (audit file)."""
    thresholds = thresholds or PositivityThresholds()
    rgb = check_rgb(ihc, "ihc")
    labels = check_label_map(instances, "instances")
    check_same_shape(rgb[..., 0], labels, "ihc", "instances")
    hsi = rgb_to_hsi(rgb)
    fractions = positive_fractions(rgb, labels, thresholds)
    records = []
    for lab, x, y in centroids(labels):
        region = labels == lab
        records.append({
            "image_id": image_id,
            "label": lab,
            "x": x,
            "y": y,
            "area": int(region.sum()),
            "positive_fraction": fractions[lab],
            "positive": fractions[lab] >= thresholds.min_fraction,
            "mean_hue": float(hsi[..., 0][region].mean()),
            "mean_saturation": float(hsi[..., 1][region].mean()),
            "mean_intensity": float(hsi[..., 2][region].mean()),
        })
    return records


def write_submission(detections: list[Detection], path) -> None:
    """Write positive detections as CSV: header image_id,x,y, one decimal
    place, rows ordered by image id then y then x."""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    rows = sorted(((d.image_id, d.y, d.x) for d in detections if d.positive))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "x", "y"])
        for image_id, y, x in rows:
            writer.writerow([image_id, f"{x:.1f}", f"{y:.1f}"])
