"""Pixel accuracy and binary IoU, including the accuracy-blindness property."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segkit.errors import EmptyInputError, MaskShapeError, PairingError
from segkit.metrics import MetricsReport, binary_iou, evaluate_pair_set, pixel_accuracy


def test_pixel_accuracy_hand_case():
    gt = np.array([[0, 1], [2, 0]], dtype=np.int16)
    pred = np.array([[0, 1], [1, 1]], dtype=np.int16)
    assert pixel_accuracy(pred, gt) == pytest.approx(0.5)


def test_pixel_accuracy_perfect():
    gt = np.arange(9, dtype=np.int16).reshape(3, 3) % 4
    assert pixel_accuracy(gt.copy(), gt) == 1.0


def test_binary_iou_hand_case():
    # fg(pred) = 3 pixels, fg(gt) = 2, overlap = 1 -> 1/4
    gt = np.array([[0, 1], [2, 0]], dtype=np.int16)
    pred = np.array([[3, 1], [0, 5]], dtype=np.int16)
    assert binary_iou(pred, gt) == pytest.approx(0.25)


def test_binary_iou_ignores_class_identity():
    gt = np.array([[1, 1], [0, 0]], dtype=np.int16)
    pred = np.array([[7, 4], [0, 0]], dtype=np.int16)
    assert binary_iou(pred, gt) == 1.0


def test_binary_iou_empty_union_is_one():
    z = np.zeros((4, 4), dtype=np.int16)
    assert binary_iou(z, z.copy()) == 1.0


def test_shape_mismatch_rejected():
    with pytest.raises(MaskShapeError):
        binary_iou(np.zeros((2, 2), dtype=np.int16), np.zeros((2, 3), dtype=np.int16))
    with pytest.raises(MaskShapeError):
        pixel_accuracy(np.zeros((2, 2), dtype=np.int16), np.zeros((3, 2), dtype=np.int16))


@given(seed=st.integers(0, 100_000))
@settings(max_examples=60, deadline=None)
def test_all_background_predictor_blindness(seed):
    """High accuracy on imbalanced data while the IoU is exactly zero."""
    rng = np.random.default_rng(seed)
    h, w = int(rng.integers(2, 40)), int(rng.integers(2, 40))
    gt = (rng.random((h, w)) < 0.1).astype(np.int16) * int(rng.integers(1, 47))
    if gt.sum() == 0:
        gt[0, 0] = 1
    pred = np.zeros_like(gt)
    f = np.count_nonzero(gt == 0) / gt.size
    assert abs(pixel_accuracy(pred, gt) - f) <= 1e-12
    assert binary_iou(pred, gt) == 0.0


class TestEvaluatePairSet:
    def test_pooled_accuracy_and_mean_iou(self):
        gt1 = np.array([[1, 0], [0, 0]], dtype=np.int16)
        pr1 = np.array([[1, 0], [0, 0]], dtype=np.int16)  # acc 1, biou 1
        gt2 = np.array([[2, 2], [0, 0]], dtype=np.int16)
        pr2 = np.array([[0, 0], [0, 0]], dtype=np.int16)  # acc 0.5, biou 0
        report = evaluate_pair_set([pr1, pr2], [gt1, gt2])
        assert report.n_images == 2
        assert report.pixel_accuracy == pytest.approx(6 / 8)  # pooled over pixels
        assert report.binary_iou == pytest.approx(0.5)  # mean of per-image ious

    def test_per_class_iou(self):
        gt = np.array([[1, 1], [2, 0]], dtype=np.int16)
        pred = np.array([[1, 2], [2, 0]], dtype=np.int16)
        report = evaluate_pair_set([pred], [gt])
        assert report.per_class_iou[1] == pytest.approx(0.5)
        assert report.per_class_iou[2] == pytest.approx(0.5)

    def test_length_mismatch(self):
        m = np.zeros((2, 2), dtype=np.int16)
        with pytest.raises(PairingError):
            evaluate_pair_set([m], [m, m])

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            evaluate_pair_set([], [])

    def test_report_serialization(self, tmp_path):
        gt = np.array([[1, 0]], dtype=np.int16)
        report = evaluate_pair_set([gt.copy()], [gt], config_fingerprint="abc123")
        json_path = tmp_path / "metrics.json"
        report.save_json(json_path)
        payload = json.loads(json_path.read_text())
        assert payload["pixel_accuracy"] == 1.0
        assert payload["binary_iou"] == 1.0
        assert payload["n_images"] == 1
        assert payload["config_fingerprint"] == "abc123"
        assert payload["per_class_iou"]["1"] == 1.0

        csv_path = tmp_path / "metrics.csv"
        report.save_csv(csv_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0].startswith("metric")
        assert any("pixel_accuracy" in line for line in lines)


def test_report_roundtrip_float_precision(tmp_path):
    gt = np.array([[1, 0], [0, 0]], dtype=np.int16)
    pred = np.array([[1, 1], [0, 0]], dtype=np.int16)
    report = evaluate_pair_set([pred], [gt])
    path = tmp_path / "m.json"
    report.save_json(path)
    payload = json.loads(path.read_text())
    assert payload["binary_iou"] == report.binary_iou  # repr round-trip exact
