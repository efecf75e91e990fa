"""Training loop with early stopping, evaluation, and single-image inference."""

from __future__ import annotations

import copy
import csv
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import NormStats, augment_pair, compute_norm_stats, load_image, normalize_image
from .errors import ConfigError, ValidationError
from .losses import LossConfig, joint_loss, threshold
from .metrics import MetricReport, dice, iou
from .model import SegClsNet
from .optim import AdamConfig, AdamState, adam_step
from .rle import rle_encode


@dataclass
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 5e-4
    beta1: float = 0.99
    beta2: float = 0.99
    max_epochs: int = 10
    early_stop_metric: str = "val_loss"  # or "val_dice"
    patience: int = 3
    seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.early_stop_metric not in ("val_loss", "val_dice"):
            raise ConfigError(f"unknown early_stop_metric {self.early_stop_metric!r}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be >= 1")


@dataclass
class TrainingHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_dice: list = field(default_factory=list)
    val_mla: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self) -> int:
        return len(self.train_loss)

    @classmethod
    def from_csv(cls, path) -> "TrainingHistory":
        hist = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                hist.train_loss.append(float(row["train_loss"]))
                hist.val_loss.append(float(row["val_loss"]))
                hist.val_dice.append(float(row["val_dice"]))
                hist.val_mla.append(float(row["val_mla"]))
        return hist

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "val_dice", "val_mla"])
            for e in range(len(self)):
                writer.writerow(
                    [e + 1]
                    + [f"{v:.10g}" for v in (
                        self.train_loss[e], self.val_loss[e],
                        self.val_dice[e], self.val_mla[e],
                    )]
                )


def _to_batch(records, stats: NormStats, rng=None):
    """Stack records into (B,3,H,W) inputs, (B,N,H,W) masks, (B,N) labels.
    When an rng is given, flips are applied before normalization."""
    images, masks = [], []
    for rec in records:
        img, msk = rec.pixels, rec.masks.masks
        if rng is not None:
            img, msk = augment_pair(img, msk, rng)
        images.append(normalize_image(img, stats).transpose(2, 0, 1))
        masks.append(msk.transpose(2, 0, 1).astype(np.float32))
    x = torch.from_numpy(np.stack(images))
    m = torch.from_numpy(np.stack(masks))
    labels = torch.from_numpy(
        np.stack([rec.labels for rec in records]).astype(np.float32)
    )
    return x, m, labels


def _run_batches(model, records, stats, loss_cfg, batch_size):
    """Eval-mode pass over records; returns (total loss, probs per image)."""
    model.eval()
    total = 0.0
    pixel_probs, class_probs = [], []
    with torch.no_grad():
        for i in range(0, len(records), batch_size):
            chunk = records[i:i + batch_size]
            x, m, y = _to_batch(chunk, stats)
            _, seg_logits, cls_logits = model(x)
            pp = torch.sigmoid(seg_logits)
            cp = torch.sigmoid(cls_logits)
            total += float(joint_loss(pp, cp, m, y, loss_cfg))
            pixel_probs.append(pp.numpy())
            class_probs.append(cp.numpy())
    return total, np.concatenate(pixel_probs), np.concatenate(class_probs)


def _validation_metrics(model, records, stats, loss_cfg, batch_size):
    total, pixel_probs, class_probs = _run_batches(
        model, records, stats, loss_cfg, batch_size
    )
    pred_masks = threshold(pixel_probs)
    dices = []
    correct = 0
    n_labels = 0
    for i, rec in enumerate(records):
        true = rec.masks.masks.transpose(2, 0, 1)
        for m in range(true.shape[0]):
            dices.append(dice(pred_masks[i, m], true[m]))
        pred_labels = (class_probs[i] >= 0.5).astype(np.uint8)
        correct += int((pred_labels == rec.labels).sum())
        n_labels += len(rec.labels)
    return total / len(records), float(np.mean(dices)), correct / n_labels


def train(
    model: SegClsNet,
    split,
    train_cfg: TrainConfig = TrainConfig(),
    loss_cfg: LossConfig = LossConfig(),
    norm_stats: NormStats | None = None,
):
    """Train with shuffled mini-batches, flip augmentation and early stopping.

    Stops once the monitored validation metric fails to improve for
    `patience` epochs and restores the best epoch's weights.
    """
    train_cfg.validate()
    loss_cfg.validate()
    if not split.train:
        raise ValidationError("training split is empty")
    stats = norm_stats or compute_norm_stats(split.train)
    torch.manual_seed(train_cfg.seed)

    params = [p for p in model.parameters() if p.requires_grad]
    adam_cfg = AdamConfig(train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2)
    state = AdamState.init(params)

    history = TrainingHistory()
    best_value = None
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = 0
    maximize = train_cfg.early_stop_metric == "val_dice"

    for epoch in range(1, train_cfg.max_epochs + 1):
        started = time.perf_counter()
        rng = np.random.default_rng((train_cfg.seed, epoch))
        order = rng.permutation(len(split.train))
        model.train()
        epoch_loss = 0.0
        n_examples = 0
        for i in range(0, len(order), train_cfg.batch_size):
            chunk = [split.train[j] for j in order[i:i + train_cfg.batch_size]]
            x, m, y = _to_batch(chunk, stats, rng=rng)
            _, seg_logits, cls_logits = model(x)
            loss = joint_loss(
                torch.sigmoid(seg_logits), torch.sigmoid(cls_logits), m, y, loss_cfg
            )
            model.zero_grad(set_to_none=True)
            loss.backward()
            adam_step(params, [p.grad for p in params], state, adam_cfg)
            epoch_loss += float(loss.detach())
            n_examples += len(chunk)

        val_loss, val_dice, val_mla = _validation_metrics(
            model, split.val, stats, loss_cfg, train_cfg.batch_size
        ) if split.val else (float("nan"), float("nan"), float("nan"))

        history.train_loss.append(epoch_loss / n_examples)
        history.val_loss.append(val_loss)
        history.val_dice.append(val_dice)
        history.val_mla.append(val_mla)
        history.epoch_seconds.append(time.perf_counter() - started)

        monitored = val_dice if maximize else val_loss
        improved = best_value is None or (
            monitored > best_value if maximize else monitored < best_value
        )
        if split.val and not np.isnan(monitored) and improved:
            best_value = monitored
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
        elif not split.val:
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
        if split.val and epoch - best_epoch >= train_cfg.patience:
            break

    model.load_state_dict(best_state)
    history.best_epoch = best_epoch
    return model, history


def evaluate(
    model: SegClsNet,
    records,
    loss_cfg: LossConfig = LossConfig(),
    norm_stats: NormStats | None = None,
    batch_size: int = 16,
) -> MetricReport:
    """Deterministic test-set evaluation: threshold at 0.5, per-image metrics."""
    if not records:
        raise ValidationError("no records to evaluate")
    stats = norm_stats or compute_norm_stats(records)
    _, pixel_probs, class_probs = _run_batches(
        model, records, stats, loss_cfg, batch_size
    )
    pred_masks = threshold(pixel_probs)
    n = pixel_probs.shape[1]
    per_dice = np.zeros((len(records), n))
    per_iou = np.zeros((len(records), n))
    true_labels = np.zeros((len(records), n), dtype=np.uint8)
    for i, rec in enumerate(records):
        true = rec.masks.masks.transpose(2, 0, 1)
        for m in range(n):
            per_dice[i, m] = dice(pred_masks[i, m], true[m])
            per_iou[i, m] = iou(pred_masks[i, m], true[m])
        true_labels[i] = rec.labels
    return MetricReport(
        image_ids=[rec.image_id for rec in records],
        per_image_dice=per_dice,
        per_image_iou=per_iou,
        true_labels=true_labels,
        pred_labels=(class_probs >= 0.5).astype(np.uint8),
        class_scores=class_probs,
    )


def predict(model: SegClsNet, image_path, norm_stats: NormStats):
    """Inference on one image file: per-class RLE masks plus class labels."""
    try:
        pixels = load_image(image_path)
    except OSError as exc:
        raise IOError(f"cannot read image {image_path}: {exc}") from exc
    x = torch.from_numpy(
        normalize_image(pixels, norm_stats).transpose(2, 0, 1)
    ).unsqueeze(0)
    model.eval()
    with torch.no_grad():
        _, seg_logits, cls_logits = model(x)
        pixel_probs = torch.sigmoid(seg_logits)[0].numpy()
        class_probs = torch.sigmoid(cls_logits)[0].numpy()
    masks = threshold(pixel_probs)
    rles = {m + 1: rle_encode(masks[m]) for m in range(masks.shape[0])}
    labels = (class_probs >= 0.5).astype(np.uint8)
    return {
        "pixel_probs": pixel_probs.transpose(1, 2, 0),
        "class_probs": class_probs,
        "rle": rles,
        "labels": labels,
    }
