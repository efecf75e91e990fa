import itertools

import numpy as np
import pytest

from steelseg.errors import ValidationError
from steelseg.metrics import (
    MetricReport,
    aggregate,
    auc,
    dice,
    iou,
    mla,
    read_report_csv,
    write_report_csv,
)


def dice_oracle(x, y):
    """Brute-force set counting over pixel coordinates."""
    xs = {tuple(p) for p in np.argwhere(np.asarray(x))}
    ys = {tuple(p) for p in np.argwhere(np.asarray(y))}
    if not xs and not ys:
        return 1.0
    return 2 * len(xs & ys) / (len(xs) + len(ys))


def iou_oracle(x, y):
    xs = {tuple(p) for p in np.argwhere(np.asarray(x))}
    ys = {tuple(p) for p in np.argwhere(np.asarray(y))}
    if not xs and not ys:
        return 1.0
    return len(xs & ys) / len(xs | ys)


def auc_oracle(scores, labels):
    """All (positive, negative) pairs; ties count one half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_dice_identity_and_disjoint():
    x = np.zeros((3, 3), dtype=np.uint8)
    x[0, :] = 1
    assert dice(x, x) == 1.0
    y = np.zeros((3, 3), dtype=np.uint8)
    y[2, :] = 1
    assert dice(x, y) == 0.0


def test_dice_half_overlap():
    x = np.zeros((4, 4), dtype=np.uint8)
    y = np.zeros((4, 4), dtype=np.uint8)
    x[0, :] = 1          # |X| = 4
    y[0, 2:] = 1         # overlap 2
    y[1, :2] = 1         # |Y| = 4
    assert dice(x, y) == pytest.approx(0.5)
    assert dice(x, y) == dice_oracle(x, y)


def test_iou_examples():
    x = np.zeros((4, 2), dtype=np.uint8)
    x[:, 0] = 1
    assert iou(x, x) == 1.0
    # |X ∩ Y| = 2, |X ∪ Y| = 6
    y = np.zeros((4, 2), dtype=np.uint8)
    y[2:, 0] = 1
    y[:2, 1] = 1
    assert iou(x, y) == pytest.approx(1 / 3)
    assert iou(x, y) == iou_oracle(x, y)


def test_both_empty_convention():
    z = np.zeros((3, 3), dtype=np.uint8)
    assert dice(z, z) == 1.0
    assert iou(z, z) == 1.0


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        dice(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        iou(np.zeros((2, 2)), np.zeros((3, 3)))


def test_dice_iou_against_oracle_sampled_3x3_pairs():
    rng = np.random.default_rng(99)
    for _ in range(512):
        x = rng.integers(0, 2, size=(3, 3))
        y = rng.integers(0, 2, size=(3, 3))
        d = dice(x, y)
        j = iou(x, y)
        assert d == dice_oracle(x, y)
        assert j == iou_oracle(x, y)
        assert abs(j - d / (2 - d)) < 1e-12
        assert 0 <= j <= d <= 1
        assert dice(y, x) == d and iou(y, x) == j


def test_mla_examples():
    true = np.array([[1, 0, 1, 0]])
    assert mla(true, true) == 1.0
    pred = np.array([[1, 0, 1, 1]])
    assert mla(pred, true) == pytest.approx(0.75)
    assert mla(1 - true, true) == 0.0


def test_auc_perfect_separation():
    assert auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0


def test_auc_hand_counted_pairs():
    assert auc([0.9, 0.1, 0.8, 0.3], [1, 1, 0, 0]) == pytest.approx(0.5)


def test_auc_all_ties():
    assert auc([0.4] * 6, [1, 0, 1, 0, 1, 0]) == pytest.approx(0.5)


def test_auc_single_class_rejected():
    with pytest.raises(ValidationError):
        auc([0.1, 0.2], [1, 1])


def test_auc_against_pairwise_oracle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = rng.integers(2, 50)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.random(n), 2)  # rounding forces ties
        assert auc(scores, labels) == pytest.approx(
            auc_oracle(scores, labels), abs=1e-9
        )


def test_auc_invariant_under_monotone_transform(rng):
    scores = rng.random(30)
    labels = (rng.random(30) < 0.5).astype(int)
    labels[0], labels[1] = 0, 1
    base = auc(scores, labels)
    assert auc(np.exp(3 * scores), labels) == pytest.approx(base, abs=1e-12)
    assert auc(2 * scores + 7, labels) == pytest.approx(base, abs=1e-12)


def test_aggregate_single_value():
    agg = aggregate([0.7])
    assert agg.mean == agg.median == agg.p12_5 == agg.p97_5 == 0.7


def test_aggregate_median_of_1_to_8():
    agg = aggregate(np.arange(1, 9))
    assert agg.median == pytest.approx(4.5)


def test_aggregate_percentiles_linear_interpolation():
    agg = aggregate(np.arange(101))  # values 0..100
    assert agg.p2_5 == pytest.approx(2.5)
    assert agg.p97_5 == pytest.approx(97.5)
    assert agg.p12_5 == pytest.approx(12.5)
    assert agg.p87_5 == pytest.approx(87.5)


def _sample_report():
    return MetricReport(
        image_ids=["a.png", "b.png", "c.png"],
        per_image_dice=[[1.0, 0.5, 1.0, 0.25], [0.9, 1.0, 0.0, 1.0], [1.0, 1.0, 1.0, 1.0]],
        per_image_iou=[[1.0, 1 / 3, 1.0, 0.2], [0.8, 1.0, 0.0, 1.0], [1.0, 1.0, 1.0, 1.0]],
        true_labels=[[1, 1, 0, 1], [1, 0, 1, 1], [0, 0, 0, 0]],
        pred_labels=[[1, 1, 0, 0], [1, 0, 1, 1], [0, 0, 0, 0]],
        class_scores=[[0.9, 0.7, 0.2, 0.4], [0.8, 0.1, 0.9, 0.6], [0.2, 0.3, 0.1, 0.2]],
    )


def test_report_mla_and_auc_fields():
    report = _sample_report()
    assert report.mla == pytest.approx(11 / 12)
    assert report.auc_per_class[0] == 1.0
    assert np.isfinite(report.auc_macro)


def test_report_iou_never_exceeds_dice():
    report = _sample_report()
    assert (report.per_image_iou <= report.per_image_dice + 1e-12).all()


def test_report_present_only_aggregates_differ():
    report = _sample_report()
    full = report.mean_dice()
    present = report.mean_dice(present_only=True)
    assert 0 <= present <= 1 and 0 <= full <= 1
    assert present != full


def test_report_csv_roundtrip(tmp_path):
    report = _sample_report()
    path = tmp_path / "report.csv"
    write_report_csv(report, path)
    loaded = read_report_csv(path)
    assert loaded.image_ids == report.image_ids
    assert np.allclose(loaded.per_image_dice, report.per_image_dice)
    assert np.allclose(loaded.class_scores, report.class_scores)
    assert loaded.mla == pytest.approx(report.mla)
