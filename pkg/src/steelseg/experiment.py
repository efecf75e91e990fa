"""Config-driven experiment runs, report comparison and plot-data emission."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import metrics
from .data import (
    NormStats,
    build_splits,
    compute_norm_stats,
    load_records,
    subsample_training,
    write_split_manifest,
)
from .errors import ConfigError, ParseError, ValidationError
from .losses import LossConfig
from .metrics import MetricReport, write_report_csv, write_summary_json
from .model import ModelConfig, build_model
from .training import TrainConfig, TrainingHistory, evaluate, train
from .weights import load_pretrained, save_checkpoint

DATA_ROOT_ENV = "STEELSEG_DATA_ROOT"

HIST_BINS = 20
HIST_RANGE = (-1.0, 1.0)


@dataclass
class ExperimentConfig:
    image_dir: str = "images"
    annotations: str = "annotations.csv"
    output_dir: str = "runs"
    label: str = "baseline"
    data_fraction: float = 1.0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def resolve_paths(self) -> tuple[Path, Path]:
        root = Path(os.environ.get(DATA_ROOT_ENV, "."))
        image_dir = Path(self.image_dir)
        annotations = Path(self.annotations)
        if not image_dir.is_absolute():
            image_dir = root / image_dir
        if not annotations.is_absolute():
            annotations = root / annotations
        return image_dir, annotations

    def validate(self) -> None:
        if not 0 < self.data_fraction <= 1:
            raise ConfigError(f"data_fraction must be in (0, 1], got {self.data_fraction}")
        image_dir, annotations = self.resolve_paths()
        if not image_dir.is_dir():
            raise ConfigError(f"image directory not found: {image_dir}")
        if not annotations.is_file():
            raise ConfigError(f"annotation file not found: {annotations}")
        self.model.validate()
        self.train.validate()
        self.loss.validate()


_CONFIG_KEYS = {
    "image_dir": ("image_dir", str),
    "annotations": ("annotations", str),
    "output_dir": ("output_dir", str),
    "label": ("label", str),
    "data_fraction": ("data_fraction", float),
    "encoder_family": ("model.encoder_family", str),
    "init_mode": ("model.init_mode", str),
    "pretrained_source": ("model.pretrained_source", str),
    "stages": ("model.stages", int),
    "num_classes": ("model.num_classes", int),
    "base_channels": ("model.base_channels", int),
    "input_shape": ("model.input_shape", "int_tuple"),
    "decoder_channels": ("model.decoder_channels", "int_tuple"),
    "batch_size": ("train.batch_size", int),
    "learning_rate": ("train.learning_rate", float),
    "beta1": ("train.beta1", float),
    "beta2": ("train.beta2", float),
    "max_epochs": ("train.max_epochs", int),
    "early_stop_metric": ("train.early_stop_metric", str),
    "patience": ("train.patience", int),
    "seed": ("train.seed", int),
    "lambda_cls": ("loss.lambda_cls", float),
    "lambda_seg": ("loss.lambda_seg", float),
    "pixel_reduction": ("loss.pixel_reduction", str),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse a flat `key = value` experiment config (''#'' starts a comment)."""
    cfg = ExperimentConfig()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"config line {line_no}: expected key = value")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"config line {line_no}: unknown key {key!r}")
        target, kind = _CONFIG_KEYS[key]
        if kind == "int_tuple":
            value = tuple(int(v) for v in raw.split(","))
        elif kind is str:
            value = raw or None if key == "pretrained_source" else raw
        else:
            try:
                value = kind(raw)
            except ValueError:
                raise ConfigError(
                    f"config line {line_no}: cannot parse {raw!r} as {kind.__name__}"
                ) from None
        obj = cfg
        *parents, attr = target.split(".")
        for name in parents:
            obj = getattr(obj, name)
        setattr(obj, attr, value)
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one labeled experiment end to end; returns the artifact paths.

    Writes: split manifest, norm stats, checkpoint, history CSV, per-image
    report CSV, summary JSON, and plot-data files. Idempotent given the same
    config and seed. The run directory must not already exist.
    """
    cfg.validate()
    run_dir = Path(cfg.output_dir) / cfg.label
    if run_dir.exists():
        raise ConfigError(f"run directory already exists: {run_dir} (clean it first)")
    run_dir.mkdir(parents=True)

    image_dir, annotations = cfg.resolve_paths()
    records = load_records(image_dir, annotations.read_text(encoding="utf-8"))
    split = build_splits(records, seed=cfg.train.seed)
    split = subsample_training(split, cfg.data_fraction)
    write_split_manifest(split, run_dir / "split_manifest.txt")

    stats = compute_norm_stats(split.train)
    (run_dir / "norm_stats.json").write_text(
        json.dumps({"mean": stats.mean.tolist(), "std": stats.std.tolist()}, indent=2)
        + "\n",
        encoding="utf-8",
    )

    model = build_model(cfg.model, seed=cfg.train.seed)
    if cfg.model.init_mode == "pretrained":
        load_pretrained(model, cfg.model.pretrained_source)

    model, history = train(model, split, cfg.train, cfg.loss, norm_stats=stats)
    save_checkpoint(model, run_dir / "checkpoint.npz")
    history.to_csv(run_dir / "history.csv")

    report = evaluate(model, split.test, cfg.loss, norm_stats=stats,
                      batch_size=cfg.train.batch_size)
    write_report_csv(report, run_dir / "report.csv")
    write_summary_json(report, run_dir / "summary.json")
    emit_plot_data({cfg.label: history}, {cfg.label: report}, run_dir)

    return {
        "run_dir": run_dir,
        "split_manifest": run_dir / "split_manifest.txt",
        "checkpoint": run_dir / "checkpoint.npz",
        "history": run_dir / "history.csv",
        "report": run_dir / "report.csv",
        "summary": run_dir / "summary.json",
    }


@dataclass
class Comparison:
    image_ids: list
    deltas: np.ndarray            # per-image mean DICE difference (a - b)
    improved_fraction: float      # count(delta > 0) / count
    mean_delta: float
    mean_abs_delta: float
    mean_relative_delta: float    # mean delta / mean per-image DICE of b
    hist_counts: np.ndarray
    hist_edges: np.ndarray


def compare(report_a: MetricReport, report_b: MetricReport) -> Comparison:
    """Per-image DICE difference between two reports on the same test set."""
    if sorted(report_a.image_ids) != sorted(report_b.image_ids):
        raise ValidationError("reports cover different test images")
    order_b = {img: i for i, img in enumerate(report_b.image_ids)}
    a_vals = report_a.per_image_dice.mean(axis=1)
    b_vals = np.array([
        report_b.per_image_dice[order_b[img]].mean() for img in report_a.image_ids
    ])
    deltas = a_vals - b_vals
    counts, edges = np.histogram(deltas, bins=HIST_BINS, range=HIST_RANGE)
    mean_b = float(b_vals.mean())
    return Comparison(
        image_ids=list(report_a.image_ids),
        deltas=deltas,
        improved_fraction=float((deltas > 0).mean()),
        mean_delta=float(deltas.mean()),
        mean_abs_delta=float(np.abs(deltas).mean()),
        mean_relative_delta=float(deltas.mean() / mean_b) if mean_b else float("nan"),
        hist_counts=counts,
        hist_edges=edges,
    )


def write_comparison(cmp: Comparison, out_dir, name: str = "comparison") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "improved_fraction": cmp.improved_fraction,
        "mean_delta": cmp.mean_delta,
        "mean_abs_delta": cmp.mean_abs_delta,
        "mean_relative_delta": cmp.mean_relative_delta,
        "num_images": len(cmp.image_ids),
    }
    (out_dir / f"{name}.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    with open(out_dir / f"{name}_hist.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, count in enumerate(cmp.hist_counts):
            writer.writerow(
                [f"{cmp.hist_edges[i]:.10g}", f"{cmp.hist_edges[i + 1]:.10g}", int(count)]
            )


def roc_points(scores, labels):
    """ROC curve points (fpr, tpr) swept over descending score thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(-scores, kind="stable")
    labels = labels[order]
    tp = np.cumsum(labels == 1)
    fp = np.cumsum(labels == 0)
    n_pos, n_neg = tp[-1], fp[-1]
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("ROC needs both positive and negative labels")
    # keep only the last point of each tied-score run
    distinct = np.flatnonzero(np.diff(scores[order], append=np.nan))
    fpr = np.concatenate([[0.0], fp[distinct] / n_neg])
    tpr = np.concatenate([[0.0], tp[distinct] / n_pos])
    return fpr, tpr


def emit_plot_data(histories: dict, reports: dict, out_dir) -> None:
    """Write convergence curves, box-plot stats and ROC points as plain CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(out_dir / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "epoch", "train_loss", "val_loss", "val_dice", "val_mla"])
        for label, hist in histories.items():
            for e in range(len(hist)):
                writer.writerow([
                    label, e + 1,
                    f"{hist.train_loss[e]:.10g}", f"{hist.val_loss[e]:.10g}",
                    f"{hist.val_dice[e]:.10g}", f"{hist.val_mla[e]:.10g}",
                ])

    with open(out_dir / "box_stats.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "label", "metric", "class",
            "mean", "median", "p12_5", "p87_5", "p2_5", "p97_5",
        ])
        for label, report in reports.items():
            for metric_name in ("dice", "iou"):
                for cls, agg in report.class_aggregates(metric_name).items():
                    if agg is None:
                        continue
                    writer.writerow(
                        [label, metric_name, cls]
                        + [f"{v:.10g}" for v in (
                            agg.mean, agg.median, agg.p12_5, agg.p87_5,
                            agg.p2_5, agg.p97_5,
                        )]
                    )

    for label, report in reports.items():
        with open(out_dir / f"roc_{label}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "fpr", "tpr"])
            for m in range(report.num_classes):
                try:
                    fpr, tpr = roc_points(
                        report.class_scores[:, m], report.true_labels[:, m]
                    )
                except ValidationError:
                    continue
                for f_val, t_val in zip(fpr, tpr):
                    writer.writerow([m + 1, f"{f_val:.10g}", f"{t_val:.10g}"])


_CLASS_COLORS = ("tab:red", "tab:blue", "tab:green", "tab:orange")


def overlay_masks(image: np.ndarray, true_masks: np.ndarray, pred_masks: np.ndarray,
                  path) -> None:
    """Render ground-truth (solid) and predicted (dashed) mask contours with
    per-class DICE in the title. Masks are (H, W, N)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    image = np.asarray(image)
    true_masks = np.asarray(true_masks)
    pred_masks = np.asarray(pred_masks)
    if true_masks.shape != pred_masks.shape or image.shape[:2] != true_masks.shape[:2]:
        raise ValidationError("image and mask shapes disagree")

    fig, ax = plt.subplots(figsize=(8, 8 * image.shape[0] / image.shape[1]))
    ax.imshow(image, cmap="gray" if image.ndim == 2 else None)
    dice_strs = []
    for m in range(true_masks.shape[2]):
        color = _CLASS_COLORS[m % len(_CLASS_COLORS)]
        if true_masks[:, :, m].any():
            ax.contour(true_masks[:, :, m], levels=[0.5], colors=[color])
        if pred_masks[:, :, m].any():
            ax.contour(pred_masks[:, :, m], levels=[0.5], colors=[color],
                       linestyles="dashed")
        dice_strs.append(f"c{m + 1}={metrics.dice(true_masks[:, :, m], pred_masks[:, :, m]):.3f}")
    ax.set_title("DICE " + " ".join(dice_strs))
    ax.axis("off")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
