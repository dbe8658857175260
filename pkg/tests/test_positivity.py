from pathlib import Path

import numpy as np
import pytest

from conftest import disc_scene
from stainshift.imaging import rgb_to_hsi
from stainshift.positivity import (Detection, PositivityThresholds,
                                   centroids, classify_positive,
                                   detect_positive_cells, positivity_report,
                                   write_submission)

GOLDEN = Path(__file__).parent / "data" / "golden_submission.csv"

BROWN = (130, 80, 40)   # DAB-like
BLUE = (60, 60, 150)    # hematoxylin-like


def test_synthetic_colors_sit_inside_and_outside_the_window():
    # sanity-check the fixture colors against the HSI conversion itself
    hsi = rgb_to_hsi(np.full((1, 1, 3), BROWN, dtype=np.uint8))[0, 0]
    assert 20 <= hsi[0] <= 50 and hsi[1] >= 0.1 and hsi[2] <= 0.85
    hsi = rgb_to_hsi(np.full((1, 1, 3), BLUE, dtype=np.uint8))[0, 0]
    assert not 20 <= hsi[0] <= 50


class TestClassifyPositive:
    def test_brown_disc_positive(self):
        image, labels = disc_scene((32, 32), [(16, 16, 8, BROWN)])
        assert classify_positive(image, labels) == {1: True}

    def test_blue_disc_negative(self):
        image, labels = disc_scene((32, 32), [(16, 16, 8, BLUE)])
        assert classify_positive(image, labels) == {1: False}

    def test_empty_label_map(self):
        image, _ = disc_scene((16, 16), [])
        flags = classify_positive(image, np.zeros((16, 16), dtype=np.int32))
        assert flags == {}

    def test_dimension_mismatch(self):
        image, _ = disc_scene((16, 16), [])
        with pytest.raises(ValueError):
            classify_positive(image, np.zeros((8, 8), dtype=np.int32))

    def test_monotone_in_min_fraction(self, rng):
        image = rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)
        labels = (rng.integers(0, 4, (24, 24))).astype(np.int32)
        previous = None
        for fraction in (0.0, 0.25, 0.5, 0.75, 1.0):
            thresholds = PositivityThresholds(min_fraction=fraction)
            flags = classify_positive(image, labels, thresholds)
            if previous is not None:
                for lab, flag in flags.items():
                    assert not (flag and not previous[lab])
            previous = flags

    def test_wraparound_hue_window(self):
        # pure red sits at hue 0; a window crossing 360 must catch it
        image, labels = disc_scene((16, 16), [(8, 8, 5, (220, 30, 30))])
        thresholds = PositivityThresholds(hue_low=350.0, hue_high=10.0)
        assert classify_positive(image, labels, thresholds) == {1: True}

    def test_achromatic_pixels_never_positive(self):
        image, labels = disc_scene((16, 16), [(8, 8, 5, (90, 90, 90))])
        thresholds = PositivityThresholds(min_saturation=0.0)
        assert classify_positive(image, labels, thresholds) == {1: False}


class TestCentroids:
    def test_single_pixel(self):
        labels = np.zeros((8, 8), dtype=np.int32)
        labels[3, 5] = 1
        assert centroids(labels) == [(1, 5.0, 3.0)]

    def test_square_block(self):
        labels = np.zeros((4, 4), dtype=np.int32)
        labels[0:2, 0:2] = 1
        assert centroids(labels) == [(1, 0.5, 0.5)]

    def test_l_shape(self):
        labels = np.zeros((3, 3), dtype=np.int32)
        labels[0, 0] = labels[1, 0] = labels[1, 1] = 1
        (lab, x, y), = centroids(labels)
        assert lab == 1
        assert x == pytest.approx(1 / 3)
        assert y == pytest.approx(2 / 3)

    def test_translation_equivariance(self, rng):
        labels = np.zeros((20, 20), dtype=np.int32)
        labels[2:6, 3:8] = 1
        labels[10:13, 10:12] = 2
        shifted = np.zeros_like(labels)
        dr, dc = 4, 5
        shifted[dr:, dc:] = labels[:-dr, :-dc]
        base = dict((lab, (x, y)) for lab, x, y in centroids(labels))
        moved = dict((lab, (x, y)) for lab, x, y in centroids(shifted))
        for lab, (x, y) in base.items():
            assert moved[lab][0] == pytest.approx(x + dc)
            assert moved[lab][1] == pytest.approx(y + dr)


class TestDetectPositiveCells:
    def test_no_positive_instances(self):
        image, labels = disc_scene((32, 32), [(16, 16, 8, BLUE)])
        detections = detect_positive_cells(image, labels)
        assert len(detections) == 1 and not detections[0].positive

    def test_single_brown_disc_center(self):
        image, labels = disc_scene((32, 32), [(16, 16, 8, BROWN)])
        detections = [d for d in detect_positive_cells(image, labels)
                      if d.positive]
        assert len(detections) == 1
        assert abs(detections[0].x - 16.0) <= 0.5
        assert abs(detections[0].y - 16.0) <= 0.5

    def test_mixed_discs_only_brown_reported(self):
        discs = [(10, 10, 5, BROWN), (10, 30, 5, BLUE),
                 (30, 10, 5, BLUE), (30, 30, 5, BROWN)]
        image, labels = disc_scene((40, 40), discs)
        detections = detect_positive_cells(image, labels, image_id="mix")
        positive = {(round(d.y), round(d.x)) for d in detections
                    if d.positive}
        assert positive == {(10, 10), (30, 30)}
        assert all(d.image_id == "mix" for d in detections)

    def test_detections_inside_bounds(self, rng):
        image = rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)
        labels = rng.integers(0, 5, (24, 24)).astype(np.int32)
        for d in detect_positive_cells(image, labels):
            assert 0 <= d.x < 24 and 0 <= d.y < 24


class TestPositivityReport:
    def test_report_covers_all_instances(self):
        discs = [(10, 10, 5, BROWN), (24, 24, 5, BLUE)]
        image, labels = disc_scene((34, 34), discs)
        records = positivity_report(image, labels, image_id="r")
        assert [r["label"] for r in records] == [1, 2]
        assert records[0]["positive"] and not records[1]["positive"]
        assert records[0]["area"] == int((labels == 1).sum())
        assert 20 <= records[0]["mean_hue"] <= 50


class TestWriteSubmission:
    def test_empty_list_header_only(self, tmp_path):
        path = tmp_path / "sub.csv"
        write_submission([], path)
        assert path.read_text() == "image_id,x,y\n"

    def test_single_detection_two_lines(self, tmp_path):
        path = tmp_path / "sub.csv"
        write_submission([Detection("roi_1", 10.0, 20.0, True)], path)
        assert path.read_text() == "image_id,x,y\nroi_1,10.0,20.0\n"

    def test_negative_detections_omitted(self, tmp_path):
        path = tmp_path / "sub.csv"
        write_submission([Detection("roi_1", 1.0, 1.0, False)], path)
        assert path.read_text() == "image_id,x,y\n"

    def test_golden_file_bit_exact(self, tmp_path):
        detections = [
            Detection("roi_2", 10.3, 3.5, True),
            Detection("roi_1", 7.0, 2.0, True),
            Detection("roi_1", 4.0, 2.0, True),
            Detection("roi_2", 1.0, 9.0, False),
            Detection("roi_1", 4.5, 1.0, True),
        ]
        path = tmp_path / "sub.csv"
        write_submission(detections, path)
        assert path.read_bytes() == GOLDEN.read_bytes()


class TestThresholdValidation:
    def test_bad_hue(self):
        with pytest.raises(ValueError):
            PositivityThresholds(hue_low=400.0)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            PositivityThresholds(min_fraction=1.5)
