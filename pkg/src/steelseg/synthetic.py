"""Synthetic defect corpus for smoke tests and desk-scale experiments.

Four defect families, one per class: filled rectangle, thin line, blob,
speckle. Defect pixels are brighter than the noisy background, with a
distinct intensity band per class.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image

from .data import NUM_CLASSES, ImageRecord, MaskSet
from .rle import rle_encode

_CLASS_INTENSITY = (250, 220, 190, 160)
_BACKGROUND_MEAN = 80.0
_BACKGROUND_STD = 12.0


def _rect_mask(rng, h, w):
    rh = rng.integers(h // 6, h // 2)
    rw = rng.integers(w // 6, w // 2)
    r0 = rng.integers(0, h - rh)
    c0 = rng.integers(0, w - rw)
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[r0:r0 + rh, c0:c0 + rw] = 1
    return mask


def _line_mask(rng, h, w):
    mask = np.zeros((h, w), dtype=np.uint8)
    thickness = int(rng.integers(1, 3))
    if rng.random() < 0.5:
        r = int(rng.integers(0, h - thickness))
        c0, c1 = sorted(rng.integers(0, w, size=2))
        mask[r:r + thickness, c0:c1 + 1] = 1
    else:
        c = int(rng.integers(0, w - thickness))
        r0, r1 = sorted(rng.integers(0, h, size=2))
        mask[r0:r1 + 1, c:c + thickness] = 1
    return mask


def _blob_mask(rng, h, w):
    radius = rng.integers(min(h, w) // 10 + 1, min(h, w) // 4 + 2)
    cr = rng.integers(radius, h - radius)
    cc = rng.integers(radius, w - radius)
    rr, cc_grid = np.mgrid[0:h, 0:w]
    return (((rr - cr) ** 2 + (cc_grid - cc) ** 2) <= radius ** 2).astype(np.uint8)


def _speckle_mask(rng, h, w):
    mask = np.zeros((h, w), dtype=np.uint8)
    region = _rect_mask(rng, h, w)
    dots = rng.random((h, w)) < 0.15
    mask[(region == 1) & dots] = 1
    if not mask.any():  # guarantee a non-empty defect
        mask[rng.integers(0, h), rng.integers(0, w)] = 1
    return mask


_GENERATORS = (_rect_mask, _line_mask, _blob_mask, _speckle_mask)


def generate_records(
    n: int, height: int = 64, width: int = 64, seed: int = 0
) -> list[ImageRecord]:
    """Generate n annotated records; ~25% defect-free, 1-2 defect classes otherwise."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        image = rng.normal(_BACKGROUND_MEAN, _BACKGROUND_STD, size=(height, width))
        masks = np.zeros((height, width, NUM_CLASSES), dtype=np.uint8)
        roll = rng.random()
        if roll < 0.25:
            classes = []
        elif roll < 0.80:
            classes = list(rng.choice(NUM_CLASSES, size=1, replace=False))
        else:
            classes = list(rng.choice(NUM_CLASSES, size=2, replace=False))
        for m in classes:
            mask = _GENERATORS[m](rng, height, width)
            # later classes may not overwrite earlier, brighter defects
            mask[masks[:, :, :m].any(axis=2)] = 0
            if not mask.any():
                continue
            masks[:, :, m] = mask
            noise = rng.normal(0, 6, size=mask.sum())
            image[mask == 1] = _CLASS_INTENSITY[m] + noise
        pixels = np.clip(image, 0, 255).astype(np.uint8)
        pixels = np.repeat(pixels[:, :, None], 3, axis=2)
        records.append(ImageRecord(f"synth_{i:04d}.png", pixels, MaskSet(masks)))
    return records


def write_corpus(out_dir: str | os.PathLike, records: list[ImageRecord]) -> Path:
    """Write records as PNGs plus a Severstal-layout annotation CSV."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    lines = ["ImageId,ClassId,EncodedPixels"]
    for rec in records:
        Image.fromarray(rec.pixels).save(image_dir / rec.image_id)
        for m in range(rec.masks.num_classes):
            rle = rle_encode(rec.masks.masks[:, :, m])
            if rle:
                lines.append(f"{rec.image_id},{m + 1},{rle}")
    csv_path = out_dir / "annotations.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return csv_path
