"""Joint classification + segmentation binary cross-entropy objective."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError, NumericError, ValidationError

EPS = 1e-7  # probability clamp; BCE is undefined at exactly 0 or 1


@dataclass
class LossConfig:
    lambda_cls: float = 1.0
    lambda_seg: float = 1.0
    pixel_reduction: str = "mean"  # "mean" divides the pixel term by H*W

    def validate(self) -> None:
        if self.lambda_cls < 0 or self.lambda_seg < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.lambda_cls == 0 and self.lambda_seg == 0:
            raise ConfigError("at least one loss weight must be positive")
        if self.pixel_reduction not in ("sum", "mean"):
            raise ConfigError(f"unknown pixel_reduction {self.pixel_reduction!r}")


def bce(p, y) -> torch.Tensor:
    """Elementwise binary cross-entropy -[y ln p + (1-y) ln(1-p)].

    Probabilities are clamped to [EPS, 1-EPS] before the logarithms.
    """
    if not torch.is_tensor(p):
        p = torch.as_tensor(p, dtype=torch.float64)
    y = torch.as_tensor(y, dtype=p.dtype)
    if not torch.isfinite(p).all() or not torch.isfinite(y).all():
        raise NumericError("non-finite input to bce")
    p = p.clamp(EPS, 1.0 - EPS)
    return -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p))


def joint_loss(
    pixel_probs: torch.Tensor,  # (B, N, H, W)
    class_probs: torch.Tensor,  # (B, N)
    masks: torch.Tensor,        # (B, N, H, W) binary
    labels: torch.Tensor,       # (B, N) binary
    cfg: LossConfig = LossConfig(),
) -> torch.Tensor:
    """Weighted sum of the image-label BCE and the per-pixel BCE.

    Both terms are summed over batch and classes. With pixel_reduction="sum"
    the pixel term also sums over every pixel; "mean" divides it by H*W so
    the two terms stay commensurate. Differentiable w.r.t. the predictions.
    """
    cfg.validate()
    masks = torch.as_tensor(masks)
    labels = torch.as_tensor(labels)
    if pixel_probs.shape != masks.shape:
        raise ValidationError(
            f"pixel_probs {tuple(pixel_probs.shape)} != masks {tuple(masks.shape)}"
        )
    if class_probs.shape != labels.shape:
        raise ValidationError(
            f"class_probs {tuple(class_probs.shape)} != labels {tuple(labels.shape)}"
        )
    if pixel_probs.ndim != 4 or class_probs.ndim != 2:
        raise ValidationError("expected (B, N, H, W) pixel and (B, N) class tensors")
    if pixel_probs.shape[0] < 1:
        raise ValidationError("batch must be non-empty")

    cls_term = bce(class_probs, labels.to(class_probs.dtype)).sum()
    pixel_bce = bce(pixel_probs, masks.to(pixel_probs.dtype))
    if cfg.pixel_reduction == "mean":
        seg_term = pixel_bce.mean(dim=(2, 3)).sum()
    else:
        seg_term = pixel_bce.sum()
    loss = cfg.lambda_cls * cls_term + cfg.lambda_seg * seg_term
    if not torch.isfinite(loss):
        raise NumericError("joint loss is non-finite")
    return loss


def threshold(pixel_probs, t: float = 0.5):
    """Binarize probabilities: 1 where prob >= t (ties count as defect)."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"threshold must lie in [0, 1], got {t}")
    if torch.is_tensor(pixel_probs):
        return (pixel_probs >= t).to(torch.uint8)
    import numpy as np

    return (np.asarray(pixel_probs) >= t).astype(np.uint8)
