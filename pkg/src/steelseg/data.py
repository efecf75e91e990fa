"""Annotation parsing, dataset records, splits, normalization and augmentation."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError, ValidationError, DegenerateDataError
from .rle import rle_decode

NUM_CLASSES = 4
DEFAULT_FRACTIONS = (0.75, 0.125, 0.125)


@dataclass
class MaskSet:
    """Per-class binary masks of shape (H, W, N)."""

    masks: np.ndarray

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=np.uint8)
        if self.masks.ndim != 3:
            raise ValidationError(f"masks must be (H, W, N), got {self.masks.shape}")

    @property
    def height(self) -> int:
        return self.masks.shape[0]

    @property
    def width(self) -> int:
        return self.masks.shape[1]

    @property
    def num_classes(self) -> int:
        return self.masks.shape[2]

    def labels(self) -> np.ndarray:
        """Binary label vector: class m present iff mask m is non-empty."""
        return (self.masks.reshape(-1, self.num_classes).any(axis=0)).astype(np.uint8)


@dataclass
class ImageRecord:
    image_id: str
    pixels: np.ndarray  # (H, W, 3) uint8
    masks: MaskSet

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValidationError(f"pixels must be (H, W, 3), got {self.pixels.shape}")
        if self.pixels.shape[:2] != (self.masks.height, self.masks.width):
            raise ValidationError(
                f"image {self.image_id}: pixels {self.pixels.shape[:2]} do not match "
                f"masks {(self.masks.height, self.masks.width)}"
            )

    @property
    def labels(self) -> np.ndarray:
        return self.masks.labels()


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    seed: int
    fractions: tuple = DEFAULT_FRACTIONS


@dataclass
class NormStats:
    """Per-channel mean/std computed over the training split only."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if (self.std <= 0).any():
            raise ValidationError("std must be positive per channel")


def parse_annotations(csv_text: str) -> list[tuple[str, int, str]]:
    """Parse a Severstal-layout annotation CSV into (image_id, class_id, rle) rows.

    Rows with an empty EncodedPixels column are skipped (no defect of that
    class); only non-empty masks produce entries.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("annotation CSV is empty; header row required") from None
    header = [h.strip() for h in header]
    required = ("ImageId", "ClassId", "EncodedPixels")
    if not all(col in header for col in required):
        raise ParseError(f"header must contain {required}, got {header}")
    idx = {col: header.index(col) for col in required}

    entries = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) < len(header):
            raise ParseError(f"line {line_no}: expected {len(header)} columns, got {len(row)}")
        image_id = row[idx["ImageId"]].strip()
        class_field = row[idx["ClassId"]].strip()
        rle = row[idx["EncodedPixels"]].strip()
        try:
            class_id = int(class_field)
        except ValueError:
            raise ParseError(f"line {line_no}: ClassId {class_field!r} is not an integer") from None
        if not 1 <= class_id <= NUM_CLASSES:
            raise ValidationError(
                f"line {line_no}: ClassId {class_id} outside 1..{NUM_CLASSES}"
            )
        if rle:
            entries.append((image_id, class_id, rle))
    return entries


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load an image file as (H, W, 3) uint8, replicating grayscale channels."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def build_masks(entries, image_id: str, height: int, width: int) -> MaskSet:
    """Assemble the per-class MaskSet for one image; absent classes are empty."""
    masks = np.zeros((height, width, NUM_CLASSES), dtype=np.uint8)
    for entry_id, class_id, rle in entries:
        if entry_id == image_id:
            masks[:, :, class_id - 1] = rle_decode(rle, height, width)
    return MaskSet(masks)


def load_records(image_dir: str | os.PathLike, csv_text: str) -> list[ImageRecord]:
    """Load every image under image_dir, attaching masks from the annotation CSV.

    Images with no annotated defects get all-zero masks (negative examples).
    """
    image_dir = Path(image_dir)
    entries = parse_annotations(csv_text)
    by_image: dict[str, list] = {}
    for image_id, class_id, rle in entries:
        by_image.setdefault(image_id, []).append((image_id, class_id, rle))

    records = []
    for path in sorted(image_dir.iterdir()):
        if path.suffix.lower() not in (".png", ".jpg", ".jpeg", ".bmp"):
            continue
        pixels = load_image(path)
        h, w = pixels.shape[:2]
        masks = build_masks(by_image.get(path.name, []), path.name, h, w)
        records.append(ImageRecord(path.name, pixels, masks))
    if not records:
        raise ValidationError(f"no images found under {image_dir}")
    return records


def build_splits(records: list, seed: int, fractions=DEFAULT_FRACTIONS) -> DatasetSplit:
    """Deterministic seeded shuffle into train/val/test partitions.

    Val and test sizes are floor(fraction * n); the remainder goes to train.
    """
    if not records:
        raise ValidationError("cannot split an empty record list")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got {fractions}")
    n = len(records)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(fractions[1] * n)
    n_test = int(fractions[2] * n)
    n_train = n - n_val - n_test
    shuffled = [records[i] for i in order]
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
        seed=seed,
        fractions=tuple(fractions),
    )


def subsample_training(split: DatasetSplit, fraction: float) -> DatasetSplit:
    """Reduce the train list to floor(fraction * |train|) by seeded sampling.

    Val and test partitions are untouched so experiments stay comparable.
    """
    if not 0 < fraction <= 1:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return split
    k = int(fraction * len(split.train))
    rng = np.random.default_rng(split.seed)
    keep = sorted(rng.choice(len(split.train), size=k, replace=False))
    return DatasetSplit(
        train=[split.train[i] for i in keep],
        val=split.val,
        test=split.test,
        seed=split.seed,
        fractions=split.fractions,
    )


def compute_norm_stats(train_records: list) -> NormStats:
    """Per-channel mean and population std over all training-split pixels."""
    if not train_records:
        raise ValidationError("cannot compute stats over an empty training set")
    count = 0
    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    for rec in train_records:
        flat = rec.pixels.reshape(-1, 3).astype(np.float64)
        count += flat.shape[0]
        total += flat.sum(axis=0)
        total_sq += (flat ** 2).sum(axis=0)
    mean = total / count
    var = total_sq / count - mean ** 2
    var = np.maximum(var, 0.0)
    if (var <= 0).any():
        raise DegenerateDataError(f"zero-variance channel(s): variances {var}")
    return NormStats(mean=mean, std=np.sqrt(var))


def normalize_image(pixels: np.ndarray, stats: NormStats) -> np.ndarray:
    """Standardize to float32 using the training-split statistics."""
    return ((pixels.astype(np.float32) - stats.mean) / stats.std).astype(np.float32)


def augment_pair(image: np.ndarray, masks: np.ndarray, rng: np.random.Generator):
    """Random horizontal/vertical flips, each with probability 0.5, applied
    identically to the image and all masks. No other transform."""
    image = np.asarray(image)
    masks = np.asarray(masks)
    if image.shape[:2] != masks.shape[:2]:
        raise ValidationError(
            f"image {image.shape[:2]} and masks {masks.shape[:2]} disagree"
        )
    if rng.random() < 0.5:  # horizontal flip (left-right)
        image = image[:, ::-1]
        masks = masks[:, ::-1]
    if rng.random() < 0.5:  # vertical flip (up-down)
        image = image[::-1]
        masks = masks[::-1]
    return np.ascontiguousarray(image), np.ascontiguousarray(masks)


def write_split_manifest(split: DatasetSplit, path: str | os.PathLike) -> None:
    """Persist image-id membership per partition for reproducibility."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, part in (("TRAIN", split.train), ("VAL", split.val), ("TEST", split.test)):
            fh.write(f"{name}\n")
            for rec in part:
                fh.write(f"{rec.image_id}\n")


def read_split_manifest(path: str | os.PathLike) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line in ("TRAIN", "VAL", "TEST"):
                current = sections.setdefault(line, [])
            elif current is None:
                raise ParseError(f"manifest line {line!r} before any section header")
            else:
                current.append(line)
    return sections
