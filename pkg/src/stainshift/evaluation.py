"""Segmentation scoring: pixel-level Dice, IoU-matched instance metrics,
threshold sweeps, and TP/FP/FN overlay rendering.

Instance matching is a one-to-one assignment that maximizes the number of
matched pairs among candidates with IoU >= threshold, breaking ties by total
IoU. Instance accuracy follows the detection convention TP / (TP + FP + FN);
true negatives are undefined at instance level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError
from .imaging import read_label_map
from .validation import check_label_map, check_mask, check_same_shape

# Overlay colors (Fig-style rendering): TP blue, FP red, FN green.
OVERLAY_TP = (0, 0, 255)
OVERLAY_FP = (255, 0, 0)
OVERLAY_FN = (0, 255, 0)
OVERLAY_BG = (255, 255, 255)

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_CURVE = (0.5, 1.0, 0.05)


@dataclass(frozen=True)
class MatchResult:
    """One-to-one instance correspondence at a fixed IoU threshold."""

    pairs: tuple[tuple[int, int, float], ...]  # (pred label, gt label, IoU)
    tp: int
    fp: int
    fn: int
    threshold: float


@dataclass(frozen=True)
class InstanceMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    accuracy: float


def iou(instance_a, instance_b) -> float:
    """Intersection over union of two non-empty pixel sets (boolean masks)."""
    a = check_mask(instance_a, "instance_a")
    b = check_mask(instance_b, "instance_b")
    check_same_shape(a, b)
    if not a.any() or not b.any():
        raise ValueError("iou requires non-empty pixel sets")
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    return inter / union


def dice(pred, gt) -> float:
    """Dice score 2|P∩G| / (|P|+|G|); both-empty masks score 1.0."""
    p = check_mask(pred, "pred")
    g = check_mask(gt, "gt")
    check_same_shape(p, g)
    p_sum = np.count_nonzero(p)
    g_sum = np.count_nonzero(g)
    if p_sum + g_sum == 0:
        return 1.0
    inter = np.count_nonzero(p & g)
    return 2.0 * inter / (p_sum + g_sum)


def _pairwise_ious(pred: np.ndarray, gt: np.ndarray):
    """All overlapping (pred label, gt label, IoU) triples plus label rosters."""
    pred_ids, pred_areas = np.unique(pred[pred > 0], return_counts=True)
    gt_ids, gt_areas = np.unique(gt[gt > 0], return_counts=True)
    pred_area = dict(zip(pred_ids.tolist(), pred_areas.tolist()))
    gt_area = dict(zip(gt_ids.tolist(), gt_areas.tolist()))

    both = (pred > 0) & (gt > 0)
    triples: list[tuple[int, int, float]] = []
    if both.any():
        codes = pred[both].astype(np.int64) * (int(gt.max()) + 1) \
            + gt[both].astype(np.int64)
        uniq, counts = np.unique(codes, return_counts=True)
        base = int(gt.max()) + 1
        for code, inter in zip(uniq.tolist(), counts.tolist()):
            p, g = divmod(code, base)
            union = pred_area[p] + gt_area[g] - inter
            triples.append((p, g, inter / union))
    return triples, pred_ids.tolist(), gt_ids.tolist()


def _assign(candidates, n_pred: int, n_gt: int):
    """Max-cardinality one-to-one matching over candidate pairs, ties broken
    by total IoU (optimal assignment)."""
    if not candidates:
        return []
    pred_ids = sorted({p for p, _, _ in candidates})
    gt_ids = sorted({g for _, g, _ in candidates})
    p_index = {p: i for i, p in enumerate(pred_ids)}
    g_index = {g: j for j, g in enumerate(gt_ids)}
    # A benefit larger than any achievable total IoU makes pair count the
    # primary objective; IoU then decides among equal-count matchings.
    bonus = min(len(pred_ids), len(gt_ids)) + 1.0
    benefit = np.zeros((len(pred_ids), len(gt_ids)))
    eligible = np.zeros_like(benefit, dtype=bool)
    for p, g, value in candidates:
        benefit[p_index[p], g_index[g]] = bonus + value
        eligible[p_index[p], g_index[g]] = True
    rows, cols = linear_sum_assignment(benefit, maximize=True)
    ious = {(p, g): v for p, g, v in candidates}
    pairs = []
    for i, j in zip(rows, cols):
        if eligible[i, j]:
            p, g = pred_ids[i], gt_ids[j]
            pairs.append((p, g, ious[(p, g)]))
    pairs.sort()
    return pairs


def match_instances(pred, gt, threshold: float = DEFAULT_IOU_THRESHOLD
                    ) -> MatchResult:
    """Match predicted to ground-truth instances at the given IoU threshold."""
    p = check_label_map(pred, "pred")
    g = check_label_map(gt, "gt")
    check_same_shape(p, g)
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    triples, pred_ids, gt_ids = _pairwise_ious(p, g)
    candidates = [t for t in triples if t[2] >= threshold]
    pairs = _assign(candidates, len(pred_ids), len(gt_ids))
    tp = len(pairs)
    return MatchResult(
        pairs=tuple(pairs),
        tp=tp,
        fp=len(pred_ids) - tp,
        fn=len(gt_ids) - tp,
        threshold=threshold,
    )


def instance_metrics(result) -> InstanceMetrics:
    """Detection-style metrics from matched counts.

    Accepts a MatchResult or a (tp, fp, fn) triple. Zero-denominator cases
    yield 0, except the all-counts-zero case where every metric is 1.0
    (perfect agreement on "nothing present").
    """
    if isinstance(result, MatchResult):
        tp, fp, fn = result.tp, result.fp, result.fn
    else:
        tp, fp, fn = result
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    if tp + fp + fn == 0:
        return InstanceMetrics(1.0, 1.0, 1.0, 1.0)
    accuracy = tp / (tp + fp + fn)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) \
        if precision + recall else 0.0
    return InstanceMetrics(accuracy, precision, recall, f1)


def threshold_grid(start: float, stop: float, step: float) -> list[float]:
    """Thresholds {start, start+step, ...} capped at stop (inclusive)."""
    if not 0.0 < start <= stop <= 1.0:
        raise ValueError("need 0 < start <= stop <= 1")
    if step <= 0.0:
        raise ValueError("step must be positive")
    values = []
    i = 0
    while True:
        t = round(start + i * step, 10)
        if t > stop + 1e-9:
            break
        values.append(min(t, 1.0))
        i += 1
    return values


def accuracy_curve(pred, gt, start: float = DEFAULT_CURVE[0],
                   stop: float = DEFAULT_CURVE[1],
                   step: float = DEFAULT_CURVE[2]) -> list[CurvePoint]:
    """Instance accuracy as the IoU threshold sweeps [start, stop] by step."""
    p = check_label_map(pred, "pred")
    g = check_label_map(gt, "gt")
    check_same_shape(p, g)
    thresholds = threshold_grid(start, stop, step)
    triples, pred_ids, gt_ids = _pairwise_ious(p, g)
    points = []
    for t in thresholds:
        candidates = [x for x in triples if x[2] >= t]
        tp = len(_assign(candidates, len(pred_ids), len(gt_ids)))
        denom = len(pred_ids) + len(gt_ids) - tp
        accuracy = tp / denom if denom else 1.0
        points.append(CurvePoint(t, accuracy))
    return points


def render_overlay(pred, gt) -> np.ndarray:
    """Color-code pixel agreement: TP blue, FP red, FN green, rest white."""
    p = check_mask(pred, "pred")
    g = check_mask(gt, "gt")
    check_same_shape(p, g)
    out = np.empty((*p.shape, 3), dtype=np.uint8)
    out[:] = OVERLAY_BG
    out[p & g] = OVERLAY_TP
    out[p & ~g] = OVERLAY_FP
    out[~p & g] = OVERLAY_FN
    return out


# ---------------------------------------------------------------------------
# Whole-dataset evaluation
# ---------------------------------------------------------------------------

@dataclass
class ImageScore:
    name: str
    dice: float
    tp: int
    fp: int
    fn: int
    n_pred: int
    n_gt: int
    metrics: InstanceMetrics

    def as_dict(self) -> dict:
        return {
            "name": self.name, "dice": self.dice,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "n_pred": self.n_pred, "n_gt": self.n_gt,
            **{f"instance_{k}": v for k, v in self.metrics.as_dict().items()},
        }


@dataclass
class DatasetReport:
    """Aggregated scores for a prediction/ground-truth directory pair.

    Carries both aggregation conventions: Dice per-image-averaged (macro) and
    pooled over all pixels; instance metrics from summed counts (micro) and
    per-image-averaged (macro).
    """

    threshold: float
    per_image: list[ImageScore]
    dice_macro: float
    dice_pooled: float
    micro: InstanceMetrics
    macro: InstanceMetrics
    tp: int
    fp: int
    fn: int
    curve: list[CurvePoint] = field(default_factory=list)
    label: str = ""

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "threshold": self.threshold,
            "dice_macro": self.dice_macro,
            "dice_pooled": self.dice_pooled,
            "instance_micro": self.micro.as_dict(),
            "instance_macro": self.macro.as_dict(),
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
            "curve": [{"threshold": c.threshold, "accuracy": c.accuracy}
                      for c in self.curve],
            "per_image": [s.as_dict() for s in self.per_image],
        }

    def table_row(self) -> str:
        m = self.micro
        cells = [f"{v:.2f}" for v in
                 (self.dice_macro, m.accuracy, m.precision, m.recall, m.f1)]
        return " | ".join([self.label or "run"] + cells)


TABLE_HEADER = "Method | Dice Score | Accuracy | Precision | Recall | F1 Score"


def format_table(reports: list[DatasetReport]) -> str:
    """Text summary in the standard comparison-table column order."""
    lines = [TABLE_HEADER, "-" * len(TABLE_HEADER)]
    lines += [r.table_row() for r in reports]
    return "\n".join(lines) + "\n"


def _aligned_basenames(pred_dir: Path, gt_dir: Path) -> list[str]:
    pred_names = {p.name for p in pred_dir.glob("*.png")}
    gt_names = {p.name for p in gt_dir.glob("*.png")}
    if not pred_names and not gt_names:
        raise DataError(f"no label maps found in {pred_dir} or {gt_dir}")
    missing_gt = sorted(pred_names - gt_names)
    missing_pred = sorted(gt_names - pred_names)
    if missing_gt or missing_pred:
        raise DataError(
            "basename mismatch between prediction and ground-truth dirs; "
            f"missing from gt: {missing_gt}; missing from pred: {missing_pred}"
        )
    return sorted(pred_names)


def evaluate_dataset(pred_dir, gt_dir,
                     threshold: float = DEFAULT_IOU_THRESHOLD,
                     curve_start: float = DEFAULT_CURVE[0],
                     curve_stop: float = DEFAULT_CURVE[1],
                     curve_step: float = DEFAULT_CURVE[2],
                     label: str = "") -> DatasetReport:
    """Score every aligned label-map pair in two directories.

    Dice is reported macro (per-image mean) and pooled; instance metrics are
    reported micro (counts summed before the ratios) and macro. The dataset
    accuracy curve uses micro aggregation at each threshold.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    names = _aligned_basenames(pred_dir, gt_dir)
    thresholds = threshold_grid(curve_start, curve_stop, curve_step)

    scores: list[ImageScore] = []
    inter_total = 0
    size_total = 0
    curve_tp = np.zeros(len(thresholds), dtype=np.int64)
    curve_np = 0
    curve_ng = 0
    for name in names:
        pred = read_label_map(pred_dir / name)
        gt = read_label_map(gt_dir / name)
        check_same_shape(pred, gt)
        d = dice(pred > 0, gt > 0)
        result = match_instances(pred, gt, threshold)
        scores.append(ImageScore(
            name=name, dice=d,
            tp=result.tp, fp=result.fp, fn=result.fn,
            n_pred=result.tp + result.fp, n_gt=result.tp + result.fn,
            metrics=instance_metrics(result),
        ))
        inter_total += np.count_nonzero((pred > 0) & (gt > 0))
        size_total += np.count_nonzero(pred > 0) + np.count_nonzero(gt > 0)

        triples, pred_ids, gt_ids = _pairwise_ious(pred, gt)
        curve_np += len(pred_ids)
        curve_ng += len(gt_ids)
        for i, t in enumerate(thresholds):
            candidates = [x for x in triples if x[2] >= t]
            curve_tp[i] += len(_assign(candidates, len(pred_ids),
                                       len(gt_ids)))

    tp = sum(s.tp for s in scores)
    fp = sum(s.fp for s in scores)
    fn = sum(s.fn for s in scores)
    macro_fields = np.array(
        [[s.metrics.accuracy, s.metrics.precision, s.metrics.recall,
          s.metrics.f1] for s in scores])
    curve = []
    for i, t in enumerate(thresholds):
        denom = curve_np + curve_ng - int(curve_tp[i])
        curve.append(CurvePoint(t, int(curve_tp[i]) / denom if denom else 1.0))

    return DatasetReport(
        threshold=threshold,
        per_image=scores,
        dice_macro=float(np.mean([s.dice for s in scores])),
        dice_pooled=2.0 * inter_total / size_total if size_total else 1.0,
        micro=instance_metrics((tp, fp, fn)),
        macro=InstanceMetrics(*macro_fields.mean(axis=0)),
        tp=tp, fp=fp, fn=fn,
        curve=curve,
        label=label,
    )
