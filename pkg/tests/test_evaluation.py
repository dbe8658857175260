import numpy as np
import pytest

from conftest import max_matching_count, pairwise_iou_table, random_label_map
from stainshift.errors import DataError
from stainshift.evaluation import (accuracy_curve, dice, evaluate_dataset,
                                   instance_metrics, iou, match_instances,
                                   render_overlay, threshold_grid)
from stainshift.imaging import write_label_map


def mask_of(coords, shape=(4, 4)):
    m = np.zeros(shape, dtype=bool)
    for r, c in coords:
        m[r, c] = True
    return m


class TestIou:
    def test_identical(self):
        m = mask_of([(0, 0), (1, 1)])
        assert iou(m, m) == 1.0

    def test_disjoint(self):
        assert iou(mask_of([(0, 0)]), mask_of([(1, 1)])) == 0.0

    def test_partial_overlap(self):
        a = mask_of([(0, 0), (0, 1), (0, 2), (0, 3)])
        b = mask_of([(0, 2), (0, 3), (1, 0), (1, 1)])
        assert iou(a, b) == pytest.approx(2 / 6)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            iou(np.zeros((2, 2), bool), mask_of([(0, 0)], (2, 2)))


class TestDice:
    def test_identical_nonempty(self):
        m = mask_of([(0, 0), (2, 3)])
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        assert dice(mask_of([(0, 0)]), mask_of([(1, 1)])) == 0.0

    def test_partial(self):
        p = mask_of([(0, 0), (0, 1)])
        g = mask_of([(0, 0), (0, 1), (1, 0), (1, 1)])
        assert dice(p, g) == pytest.approx(2 * 2 / 6)

    def test_both_empty_convention(self):
        z = np.zeros((3, 3), bool)
        assert dice(z, z) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dice(np.zeros((2, 2), bool), np.zeros((3, 3), bool))

    def test_properties_random(self, rng):
        for _ in range(200):
            p = rng.random((8, 8)) < 0.4
            g = rng.random((8, 8)) < 0.4
            d = dice(p, g)
            assert 0.0 <= d <= 1.0
            assert d == dice(g, p)


class TestMatchInstances:
    def test_identity(self, rng):
        gt = random_label_map(rng, 16, 16, 5)
        for t in (0.3, 0.5, 1.0):
            res = match_instances(gt, gt, t)
            k = len(np.unique(gt[gt > 0]))
            assert (res.tp, res.fp, res.fn) == (k, 0, 0)

    def test_empty_prediction(self):
        gt = np.zeros((6, 6), dtype=np.int32)
        gt[0, 0], gt[2, 2], gt[4, 4] = 1, 2, 3
        res = match_instances(np.zeros_like(gt), gt, 0.5)
        assert (res.tp, res.fp, res.fn) == (0, 0, 3)

    def test_crafted_six_by_six(self):
        # gt A: 5 px, pred A': 3 of those -> IoU 3/5 = 0.6
        # gt B: 2 px, pred B': 2 px with 1 shared -> IoU 1/3
        gt = np.zeros((6, 6), dtype=np.int32)
        gt[0, 0:5] = 1
        gt[3, 0:2] = 2
        pred = np.zeros((6, 6), dtype=np.int32)
        pred[0, 0:3] = 1
        pred[3, 1:3] = 2
        res = match_instances(pred, gt, 0.5)
        assert (res.tp, res.fp, res.fn) == (1, 1, 1)
        assert res.pairs == ((1, 1, 0.6),)

    def test_one_to_one(self, rng):
        pred = random_label_map(rng, 20, 20, 6)
        gt = random_label_map(rng, 20, 20, 6)
        res = match_instances(pred, gt, 0.3)
        assert len({p for p, _, _ in res.pairs}) == len(res.pairs)
        assert len({g for _, g, _ in res.pairs}) == len(res.pairs)
        assert all(v >= 0.3 for _, _, v in res.pairs)

    def test_threshold_range(self):
        z = np.zeros((2, 2), dtype=np.int32)
        with pytest.raises(ValueError):
            match_instances(z, z, 0.0)

    def test_matches_brute_force(self, rng):
        for _ in range(60):
            pred = random_label_map(rng, 20, 20, 6)
            gt = random_label_map(rng, 20, 20, 6)
            table = pairwise_iou_table(pred, gt)
            for t in (0.3, 0.5, 0.75):
                eligible = [pg for pg, v in table.items() if v >= t]
                assert match_instances(pred, gt, t).tp \
                    == max_matching_count(eligible)


class TestInstanceMetrics:
    def test_perfect(self):
        m = instance_metrics((1, 0, 0))
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1, 1, 1, 1)

    def test_no_true_positives(self):
        m = instance_metrics((0, 2, 3))
        assert (m.accuracy, m.precision, m.recall, m.f1) == (0, 0, 0, 0)

    def test_f1_from_fractional_rates(self):
        # TP/FP/FN chosen so precision = 0.63 and recall = 0.49 exactly
        m = instance_metrics((3087, 1813, 3213))
        assert m.precision == pytest.approx(0.63)
        assert m.recall == pytest.approx(0.49)
        assert abs(m.f1 - 0.55) <= 0.005

    def test_all_zero_convention(self):
        m = instance_metrics((0, 0, 0))
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1, 1, 1, 1)

    def test_accuracy_bounded_by_precision_and_recall(self, rng):
        for _ in range(200):
            tp, fp, fn = (int(v) for v in rng.integers(0, 20, 3))
            if tp == 0 or tp + fp + fn == 0:
                continue
            m = instance_metrics((tp, fp, fn))
            assert m.accuracy <= min(m.precision, m.recall) + 1e-12


class TestAccuracyCurve:
    def test_default_grid_has_eleven_points(self):
        assert len(threshold_grid(0.5, 1.0, 0.05)) == 11
        z = np.zeros((4, 4), dtype=np.int32)
        z[0, 0] = 1
        points = accuracy_curve(z, z)
        assert len(points) == 11
        assert [p.threshold for p in points] == \
            pytest.approx([0.5 + 0.05 * i for i in range(11)])

    def test_perfect_prediction_flat_curve(self, rng):
        gt = random_label_map(rng, 16, 16, 5)
        for p in accuracy_curve(gt, gt):
            assert p.accuracy == 1.0

    def test_non_increasing_random(self, rng):
        for _ in range(30):
            pred = random_label_map(rng, 16, 16, 6)
            gt = random_label_map(rng, 16, 16, 6)
            acc = [p.accuracy for p in accuracy_curve(pred, gt)]
            assert all(a >= b - 1e-12 for a, b in zip(acc, acc[1:]))

    def test_invalid_range(self):
        z = np.zeros((2, 2), dtype=np.int32)
        with pytest.raises(ValueError):
            accuracy_curve(z, z, start=0.0, stop=1.0, step=0.05)
        with pytest.raises(ValueError):
            accuracy_curve(z, z, start=0.9, stop=0.5, step=0.05)


class TestRenderOverlay:
    def test_perfect_prediction_blue_and_white(self):
        m = mask_of([(0, 0), (1, 1)], (3, 3))
        out = render_overlay(m, m)
        assert (out[m] == (0, 0, 255)).all()
        assert (out[~m] == (255, 255, 255)).all()

    def test_missed_everything_green_on_white(self):
        g = mask_of([(1, 1)], (3, 3))
        out = render_overlay(np.zeros((3, 3), bool), g)
        assert (out[1, 1] == (0, 255, 0)).all()
        assert (out[0, 0] == (255, 255, 255)).all()

    def test_truth_table(self):
        pred = mask_of([(0, 0), (0, 1)], (3, 3))
        gt = mask_of([(0, 0), (0, 2)], (3, 3))
        out = render_overlay(pred, gt)
        assert tuple(out[0, 0]) == (0, 0, 255)     # TP
        assert tuple(out[0, 1]) == (255, 0, 0)     # FP
        assert tuple(out[0, 2]) == (0, 255, 0)     # FN
        assert tuple(out[1, 1]) == (255, 255, 255)

    def test_partition_exhaustive_exclusive(self, rng):
        pred = rng.random((10, 10)) < 0.5
        gt = rng.random((10, 10)) < 0.5
        out = render_overlay(pred, gt)
        palette = {(0, 0, 255), (255, 0, 0), (0, 255, 0), (255, 255, 255)}
        for row in out.reshape(-1, 3):
            assert tuple(row) in palette


class TestEvaluateDataset:
    def write_pair(self, tmp_path, name, pred, gt):
        write_label_map(tmp_path / "pred" / name, pred)
        write_label_map(tmp_path / "gt" / name, gt)

    def test_single_image_equals_direct_metrics(self, tmp_path, rng):
        pred = random_label_map(rng, 16, 16, 4)
        gt = random_label_map(rng, 16, 16, 4)
        self.write_pair(tmp_path, "a.png", pred, gt)
        report = evaluate_dataset(tmp_path / "pred", tmp_path / "gt")
        res = match_instances(pred, gt, 0.5)
        assert report.tp == res.tp and report.fp == res.fp \
            and report.fn == res.fn
        assert report.dice_macro == pytest.approx(dice(pred > 0, gt > 0))
        assert report.micro == instance_metrics(res)

    def test_duplicated_pair_micro_invariant(self, tmp_path, rng):
        pred = random_label_map(rng, 16, 16, 4)
        gt = random_label_map(rng, 16, 16, 4)
        self.write_pair(tmp_path, "a.png", pred, gt)
        single = evaluate_dataset(tmp_path / "pred", tmp_path / "gt")
        self.write_pair(tmp_path, "b.png", pred, gt)
        double = evaluate_dataset(tmp_path / "pred", tmp_path / "gt")
        assert double.micro == single.micro
        assert double.dice_macro == pytest.approx(single.dice_macro)

    def test_two_image_hand_aggregation(self, tmp_path):
        # image 1: one gt instance, matched exactly -> TP=1
        gt1 = np.zeros((6, 6), dtype=np.int32)
        gt1[1:3, 1:3] = 1
        # image 2: one gt, one disjoint pred -> FP=1, FN=1
        gt2 = np.zeros((6, 6), dtype=np.int32)
        gt2[0:2, 0:2] = 1
        pred2 = np.zeros((6, 6), dtype=np.int32)
        pred2[4:6, 4:6] = 1
        self.write_pair(tmp_path, "a.png", gt1, gt1)
        self.write_pair(tmp_path, "b.png", pred2, gt2)
        report = evaluate_dataset(tmp_path / "pred", tmp_path / "gt")
        assert (report.tp, report.fp, report.fn) == (1, 1, 1)
        micro = report.micro
        assert micro.accuracy == pytest.approx(1 / 3)
        assert micro.precision == pytest.approx(1 / 2)
        assert micro.recall == pytest.approx(1 / 2)
        # macro: image a scores 1.0 across the board, image b scores 0.0
        assert report.macro.accuracy == pytest.approx(0.5)
        assert report.dice_macro == pytest.approx(
            (1.0 + dice(pred2 > 0, gt2 > 0)) / 2)

    def test_basename_mismatch_listed(self, tmp_path):
        write_label_map(tmp_path / "pred" / "a.png",
                        np.zeros((4, 4), dtype=np.int32))
        write_label_map(tmp_path / "gt" / "b.png",
                        np.zeros((4, 4), dtype=np.int32))
        with pytest.raises(DataError) as err:
            evaluate_dataset(tmp_path / "pred", tmp_path / "gt")
        assert "a.png" in str(err.value) and "b.png" in str(err.value)
