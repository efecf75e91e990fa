"""Run-length codec for binary defect masks.

Convention (Severstal style): pixels are numbered 1..H*W in column-major
order, i.e. index p covers row (p-1) % H, column (p-1) // H. An RLE string
is a space-separated sequence of (start, length) pairs with strictly
increasing, non-overlapping runs. The empty string is the empty mask.
"""

from __future__ import annotations

import numpy as np

from .errors import DecodeError, ValidationError


def _parse_pairs(rle: str) -> tuple[np.ndarray, np.ndarray]:
    tokens = rle.split()
    if len(tokens) % 2 != 0:
        raise ValidationError(f"RLE has odd token count ({len(tokens)})")
    try:
        values = np.array([int(t) for t in tokens], dtype=np.int64)
    except ValueError as exc:
        raise ValidationError(f"RLE contains a non-integer token: {exc}") from exc
    if len(values) and values.min() <= 0:
        raise ValidationError("RLE tokens must be positive integers")
    return values[0::2], values[1::2]


def rle_decode(rle: str, height: int, width: int) -> np.ndarray:
    """Decode an RLE string into a binary uint8 mask of shape (height, width)."""
    if height <= 0 or width <= 0:
        raise ValidationError("mask dimensions must be positive")
    starts, lengths = _parse_pairs(rle)
    flat = np.zeros(height * width, dtype=np.uint8)
    prev_end = 0  # exclusive end of the previous run, 0-based
    for start, length in zip(starts, lengths):
        lo = int(start) - 1
        hi = lo + int(length)
        if lo < prev_end:
            raise DecodeError(f"run starting at {start} overlaps or is out of order")
        if hi > height * width:
            raise DecodeError(
                f"run ({start}, {length}) overruns image area {height}x{width}"
            )
        flat[lo:hi] = 1
        prev_end = hi
    return flat.reshape((width, height)).T


def rle_encode(mask: np.ndarray) -> str:
    """Encode a binary mask into canonical RLE (maximal runs, ascending starts)."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValidationError(f"mask must be 2-D, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValidationError("mask must be binary")
    flat = mask.T.reshape(-1).astype(np.int8)
    padded = np.concatenate([[0], flat, [0]])
    edges = np.flatnonzero(padded[1:] != padded[:-1]) + 1  # 1-based run boundaries
    starts = edges[0::2]
    lengths = edges[1::2] - starts
    return " ".join(f"{s} {l}" for s, l in zip(starts, lengths))
