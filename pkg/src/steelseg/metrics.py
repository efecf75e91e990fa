"""Segmentation and classification metrics: DICE, IoU, MLA, AUC, aggregates."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValidationError(f"mask shapes differ: {x.shape} vs {y.shape}")
    return x.astype(bool), y.astype(bool)


def dice(x, y) -> float:
    """2|X∩Y| / (|X|+|Y|); both-empty pairs score 1.0 (correct negative)."""
    x, y = _check_pair(x, y)
    denom = x.sum() + y.sum()
    if denom == 0:
        return 1.0
    return 2.0 * np.logical_and(x, y).sum() / denom


def iou(x, y) -> float:
    """|X∩Y| / |X∪Y|; both-empty pairs score 1.0."""
    x, y = _check_pair(x, y)
    union = np.logical_or(x, y).sum()
    if union == 0:
        return 1.0
    return np.logical_and(x, y).sum() / union


def mla(pred_labels, true_labels) -> float:
    """Multi-label accuracy: mean over images of the per-image fraction of
    correctly predicted class labels."""
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape:
        raise ValidationError(f"label shapes differ: {pred.shape} vs {true.shape}")
    return float((pred == true).mean())


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: fraction of (positive, negative) pairs where the
    positive outscores the negative, ties counting 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be 1-D and the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)  # midranks handle ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ClassAggregate:
    mean: float
    median: float
    p12_5: float
    p87_5: float
    p2_5: float
    p97_5: float


def aggregate(values) -> ClassAggregate:
    """Mean, median, central 75% and 95% intervals (interpolated percentiles)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("cannot aggregate an empty value list")
    p = np.percentile(values, [12.5, 87.5, 2.5, 97.5])
    return ClassAggregate(
        mean=float(values.mean()),
        median=float(np.median(values)),
        p12_5=float(p[0]),
        p87_5=float(p[1]),
        p2_5=float(p[2]),
        p97_5=float(p[3]),
    )


@dataclass
class MetricReport:
    image_ids: list
    per_image_dice: np.ndarray   # (images, N)
    per_image_iou: np.ndarray    # (images, N)
    true_labels: np.ndarray      # (images, N)
    pred_labels: np.ndarray      # (images, N)
    class_scores: np.ndarray     # (images, N) raw class probabilities
    mla: float = field(init=False)
    auc_per_class: np.ndarray = field(init=False)
    auc_macro: float = field(init=False)

    def __post_init__(self):
        self.per_image_dice = np.asarray(self.per_image_dice, dtype=np.float64)
        self.per_image_iou = np.asarray(self.per_image_iou, dtype=np.float64)
        self.true_labels = np.asarray(self.true_labels)
        self.pred_labels = np.asarray(self.pred_labels)
        self.class_scores = np.asarray(self.class_scores, dtype=np.float64)
        self.mla = mla(self.pred_labels, self.true_labels)
        n = self.true_labels.shape[1]
        aucs = np.full(n, np.nan)
        for m in range(n):
            try:
                aucs[m] = auc(self.class_scores[:, m], self.true_labels[:, m])
            except ValidationError:
                warnings.warn(
                    f"class {m + 1}: AUC undefined (single-class labels); "
                    "excluded from the macro average"
                )
        self.auc_per_class = aucs
        defined = aucs[~np.isnan(aucs)]
        self.auc_macro = float(defined.mean()) if defined.size else float("nan")

    @property
    def num_classes(self) -> int:
        return self.true_labels.shape[1]

    def class_aggregates(self, metric: str = "dice", present_only: bool = False):
        """Per-class aggregates over images; present_only restricts to images
        where the ground-truth mask of that class is non-empty."""
        table = self.per_image_dice if metric == "dice" else self.per_image_iou
        out = {}
        for m in range(self.num_classes):
            values = table[:, m]
            if present_only:
                values = values[self.true_labels[:, m] == 1]
            out[m + 1] = aggregate(values) if values.size else None
        return out

    def mean_dice(self, present_only: bool = False) -> float:
        if present_only:
            sel = self.true_labels == 1
            return float(self.per_image_dice[sel].mean()) if sel.any() else float("nan")
        return float(self.per_image_dice.mean())

    def mean_iou(self, present_only: bool = False) -> float:
        if present_only:
            sel = self.true_labels == 1
            return float(self.per_image_iou[sel].mean()) if sel.any() else float("nan")
        return float(self.per_image_iou.mean())


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def write_report_csv(report: MetricReport, path) -> None:
    """One row per image: DICE/IoU per class, labels and class scores."""
    n = report.num_classes
    header = (
        ["image_id"]
        + [f"dice_{m}" for m in range(1, n + 1)]
        + [f"iou_{m}" for m in range(1, n + 1)]
        + [f"true_{m}" for m in range(1, n + 1)]
        + [f"pred_{m}" for m in range(1, n + 1)]
        + [f"score_{m}" for m in range(1, n + 1)]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, image_id in enumerate(report.image_ids):
            writer.writerow(
                [image_id]
                + [_fmt(v) for v in report.per_image_dice[i]]
                + [_fmt(v) for v in report.per_image_iou[i]]
                + [int(v) for v in report.true_labels[i]]
                + [int(v) for v in report.pred_labels[i]]
                + [_fmt(v) for v in report.class_scores[i]]
            )


def read_report_csv(path) -> MetricReport:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError(f"report {path} has no rows")
    n = sum(1 for k in rows[0] if k.startswith("dice_"))
    return MetricReport(
        image_ids=[r["image_id"] for r in rows],
        per_image_dice=[[float(r[f"dice_{m}"]) for m in range(1, n + 1)] for r in rows],
        per_image_iou=[[float(r[f"iou_{m}"]) for m in range(1, n + 1)] for r in rows],
        true_labels=[[int(r[f"true_{m}"]) for m in range(1, n + 1)] for r in rows],
        pred_labels=[[int(r[f"pred_{m}"]) for m in range(1, n + 1)] for r in rows],
        class_scores=[[float(r[f"score_{m}"]) for m in range(1, n + 1)] for r in rows],
    )


def write_summary_json(report: MetricReport, path) -> None:
    def agg_dict(aggs):
        return {
            str(k): (None if a is None else vars(a)) for k, a in aggs.items()
        }

    summary = {
        "mla": report.mla,
        "auc_per_class": [None if np.isnan(v) else v for v in report.auc_per_class],
        "auc_macro": None if np.isnan(report.auc_macro) else report.auc_macro,
        "mean_dice": report.mean_dice(),
        "mean_iou": report.mean_iou(),
        "mean_dice_present_only": _nan_to_none(report.mean_dice(present_only=True)),
        "mean_iou_present_only": _nan_to_none(report.mean_iou(present_only=True)),
        "dice_aggregates": agg_dict(report.class_aggregates("dice")),
        "iou_aggregates": agg_dict(report.class_aggregates("iou")),
        "dice_aggregates_present_only": agg_dict(
            report.class_aggregates("dice", present_only=True)
        ),
        "iou_aggregates_present_only": agg_dict(
            report.class_aggregates("iou", present_only=True)
        ),
    }
    Path(path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


def _nan_to_none(x: float):
    return None if np.isnan(x) else x
