"""U-Net with swappable ResNet/DenseNet-style encoders.

The encoder produces one feature map per stage, halving resolution each
time. The decoder mirrors it with nearest-neighbor upsampling and skip
concatenation. Two heads share the encoder: a sigmoid segmentation head at
full resolution and a linear classifier over the spatially pooled
bottleneck.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ConfigError, ValidationError

ENCODER_FAMILIES = ("resnet", "densenet")
SEG_HEAD_BIAS_INIT = -2.0


@dataclass
class ModelConfig:
    encoder_family: str = "resnet"
    init_mode: str = "random"
    stages: int = 5
    num_classes: int = 4
    input_shape: tuple = (256, 1600, 3)
    decoder_channels: tuple = (256, 128, 64, 32, 16)
    pretrained_source: str | None = None
    base_channels: int = 64  # encoder width; 64 gives the full-size nets

    def validate(self) -> None:
        if self.encoder_family not in ENCODER_FAMILIES:
            raise ConfigError(f"unknown encoder family {self.encoder_family!r}")
        if self.init_mode not in ("random", "pretrained"):
            raise ConfigError(f"unknown init mode {self.init_mode!r}")
        if self.stages < 2:
            raise ConfigError("stages must be >= 2")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        h, w = self.input_shape[0], self.input_shape[1]
        if h % (1 << self.stages) or w % (1 << self.stages):
            raise ConfigError(
                f"input {h}x{w} not divisible by 2^{self.stages}"
            )
        if len(self.decoder_channels) < self.stages:
            raise ConfigError(
                f"need {self.stages} decoder channel widths, got {len(self.decoder_channels)}"
            )
        if self.init_mode == "pretrained" and not self.pretrained_source:
            raise ConfigError("init_mode=pretrained requires pretrained_source")


@dataclass
class FeaturePyramid:
    """Per-stage encoder features; feature s has spatial size (H/2^(s+1), W/2^(s+1))."""

    features: list

    @property
    def bottleneck(self) -> torch.Tensor:
        return self.features[-1]


@dataclass
class Prediction:
    pixel_probs: torch.Tensor  # (B, N, H, W) in [0, 1]
    class_probs: torch.Tensor  # (B, N) in [0, 1]


class BasicBlock(nn.Module):
    """Residual block: two 3x3 conv + BN + ReLU with an additive shortcut."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class ResNetEncoder(nn.Module):
    """ResNet-18 style encoder: stem + (stages-1) layers of two BasicBlocks."""

    def __init__(self, stages: int, base: int = 64):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, base, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(base),
            nn.ReLU(inplace=True),
        )
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        widths = [base] + [base * (1 << max(0, i - 1)) for i in range(1, stages)]
        self.layers = nn.ModuleList()
        in_ch = base
        for i in range(1, stages):
            out_ch = widths[i]
            stride = 1 if i == 1 else 2  # layer 1 follows the stride-2 maxpool
            self.layers.append(
                nn.Sequential(
                    BasicBlock(in_ch, out_ch, stride=stride),
                    BasicBlock(out_ch, out_ch),
                )
            )
            in_ch = out_ch
        self.stage_channels = widths

    def forward(self, x):
        features = [self.stem(x)]
        x = self.pool(features[0])
        for i, layer in enumerate(self.layers):
            x = layer(x)
            features.append(x)
        return features


class DenseLayer(nn.Module):
    """BN + ReLU + 1x1 conv bottleneck, BN + ReLU + 3x3 conv, concat with input."""

    def __init__(self, in_ch: int, growth: int, bn_size: int = 4):
        super().__init__()
        self.body = nn.Sequential(
            nn.BatchNorm2d(in_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(in_ch, bn_size * growth, 1, bias=False),
            nn.BatchNorm2d(bn_size * growth),
            nn.ReLU(inplace=True),
            nn.Conv2d(bn_size * growth, growth, 3, padding=1, bias=False),
        )

    def forward(self, x):
        return torch.cat([x, self.body(x)], dim=1)


class DenseBlock(nn.Sequential):
    def __init__(self, in_ch: int, layers: int, growth: int):
        super().__init__(
            *[DenseLayer(in_ch + i * growth, growth) for i in range(layers)]
        )
        self.out_channels = in_ch + layers * growth


class Transition(nn.Module):
    """BN + ReLU + 1x1 conv halving channels, then 2x average pooling."""

    def __init__(self, in_ch: int):
        super().__init__()
        self.out_channels = in_ch // 2
        self.body = nn.Sequential(
            nn.BatchNorm2d(in_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(in_ch, self.out_channels, 1, bias=False),
            nn.AvgPool2d(2),
        )

    def forward(self, x):
        return self.body(x)


class DenseNetEncoder(nn.Module):
    """DenseNet-121 style encoder (growth 32 at full width).

    The deepest block is trimmed to 15 layers to keep the encoder near its
    6M-parameter budget (6.79M vs 6.95M for the stock 16-layer block).
    """

    BLOCK_LAYERS = (6, 12, 24, 15)

    def __init__(self, stages: int, base: int = 64):
        super().__init__()
        growth = max(base // 2, 2)
        self.stem = nn.Sequential(
            nn.Conv2d(3, base, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(base),
            nn.ReLU(inplace=True),
        )
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        self.blocks = nn.ModuleList()
        self.transitions = nn.ModuleList()
        widths = [base]
        ch = base
        for i, layers in enumerate(self.BLOCK_LAYERS[: stages - 1]):
            if i > 0:
                trans = Transition(ch)
                self.transitions.append(trans)
                ch = trans.out_channels
            block = DenseBlock(ch, layers, growth)
            self.blocks.append(block)
            ch = block.out_channels
            widths.append(ch)
        self.final_norm = nn.Sequential(nn.BatchNorm2d(ch), nn.ReLU(inplace=True))
        self.stage_channels = widths

    def forward(self, x):
        features = [self.stem(x)]
        x = self.pool(features[0])
        for i, block in enumerate(self.blocks):
            if i > 0:
                x = self.transitions[i - 1](x)
            x = block(x)
            features.append(x)
        features[-1] = self.final_norm(features[-1])
        return features


class DecoderStage(nn.Module):
    """2x nearest upsampling, skip concatenation, two 3x3 conv + BN + ReLU."""

    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.body = nn.Sequential(
            nn.Conv2d(in_ch + skip_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x, skip=None):
        x = self.up(x)
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return self.body(x)


class SegClsNet(nn.Module):
    """Joint segmentation + classification network."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        if config.encoder_family == "resnet":
            self.encoder = ResNetEncoder(config.stages, config.base_channels)
        else:
            self.encoder = DenseNetEncoder(config.stages, config.base_channels)
        enc_ch = self.encoder.stage_channels
        dec_ch = list(config.decoder_channels[: config.stages])
        self.decoder = nn.ModuleList()
        in_ch = enc_ch[-1]
        for j in range(config.stages):
            skip_idx = config.stages - 2 - j  # deepest decoder stage uses skip s-2
            skip = enc_ch[skip_idx] if skip_idx >= 0 else 0
            self.decoder.append(DecoderStage(in_ch, skip, dec_ch[j]))
            in_ch = dec_ch[j]
        self.seg_head = nn.Conv2d(in_ch, config.num_classes, 1)
        self.classifier = nn.Linear(enc_ch[-1], config.num_classes)

    def forward(self, x: torch.Tensor):
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValidationError(f"expected batch (B, 3, H, W), got {tuple(x.shape)}")
        h, w = x.shape[2], x.shape[3]
        if h % (1 << self.config.stages) or w % (1 << self.config.stages):
            raise ValidationError(
                f"input {h}x{w} not divisible by 2^{self.config.stages}"
            )
        features = self.encoder(x)
        y = features[-1]
        for j, stage in enumerate(self.decoder):
            skip_idx = self.config.stages - 2 - j
            y = stage(y, features[skip_idx] if skip_idx >= 0 else None)
        seg_logits = self.seg_head(y)
        cls_logits = self.classify(features[-1])
        return features, seg_logits, cls_logits


    def classify(self, bottleneck: torch.Tensor) -> torch.Tensor:
        """Spatial average pooling over the bottleneck, then one affine map."""
        pooled = bottleneck.mean(dim=(2, 3))
        return self.classifier(pooled)


def _init_weights(module: nn.Module) -> None:
    # fan-in scaled uniform for conv/linear, zeros for biases, 1/0 for BN
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        fan_in = module.weight.shape[1] * (
            module.weight.shape[2] * module.weight.shape[3]
            if module.weight.ndim == 4
            else 1
        )
        bound = math.sqrt(3.0 / max(fan_in, 1))
        nn.init.uniform_(module.weight, -bound, bound)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def build_model(config: ModelConfig, seed: int | None = None) -> SegClsNet:
    """Construct and randomly initialize the network.

    Pretrained encoder weights are loaded separately via weights.load_pretrained
    so that random and pretrained modes share an identical architecture.
    """
    config.validate()
    if seed is not None:
        torch.manual_seed(seed)
    model = SegClsNet(config)
    model.apply(_init_weights)
    # defect pixels are sparse; biasing the segmentation head toward empty
    # masks (sigmoid ~= 0.12) avoids wasting early epochs unlearning noise
    nn.init.constant_(model.seg_head.bias, SEG_HEAD_BIAS_INIT)
    return model


def forward(model: SegClsNet, batch: torch.Tensor):
    """Run one forward pass, returning the feature pyramid and probabilities."""
    features, seg_logits, cls_logits = model(batch)
    return FeaturePyramid(features), Prediction(
        pixel_probs=torch.sigmoid(seg_logits), class_probs=torch.sigmoid(cls_logits)
    )


def count_parameters(model: SegClsNet, scope: str = "all") -> int:
    """Count trainable scalars. Scope 'decoder' covers everything outside the
    encoder (decoder stages plus both heads), so encoder + decoder = all."""
    if scope not in ("encoder", "decoder", "all"):
        raise ValidationError(f"unknown scope {scope!r}")
    total = sum(p.numel() for p in model.parameters() if p.requires_grad)
    enc = sum(p.numel() for p in model.encoder.parameters() if p.requires_grad)
    return {"encoder": enc, "decoder": total - enc, "all": total}[scope]
