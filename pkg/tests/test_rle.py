import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steelseg.errors import DecodeError, ValidationError
from steelseg.rle import rle_decode, rle_encode


def decode_oracle(rle, height, width):
    """Independent decode: enumerate covered 1-based column-major indices."""
    mask = np.zeros((height, width), dtype=np.uint8)
    tokens = [int(t) for t in rle.split()]
    for start, length in zip(tokens[0::2], tokens[1::2]):
        for p in range(start, start + length):
            mask[(p - 1) % height, (p - 1) // height] = 1
    return mask


def test_decode_column_major_first_column():
    mask = rle_decode("1 3", 4, 2)
    assert mask.sum() == 3
    assert np.array_equal(mask, decode_oracle("1 3", 4, 2))
    assert mask[0, 0] == mask[1, 0] == mask[2, 0] == 1


def test_decode_crosses_into_second_column():
    mask = rle_decode("5 2", 4, 2)
    assert mask[0, 1] == 1 and mask[1, 1] == 1
    assert mask.sum() == 2
    assert np.array_equal(mask, decode_oracle("5 2", 4, 2))


def test_decode_empty_string_is_empty_mask():
    assert rle_decode("", 4, 2).sum() == 0


def test_decode_set_pixel_count_matches_run_sum():
    mask = rle_decode("1 2 6 3", 4, 3)
    assert mask.sum() == 5


def test_decode_overrun_rejected():
    with pytest.raises(DecodeError):
        rle_decode("7 3", 4, 2)


def test_decode_overlap_rejected():
    with pytest.raises(DecodeError):
        rle_decode("1 3 2 2", 4, 2)


def test_decode_unordered_starts_rejected():
    with pytest.raises(DecodeError):
        rle_decode("5 1 1 2", 4, 2)


@pytest.mark.parametrize("bad", ["1", "1 2 3", "0 3", "1 -2", "a 3"])
def test_decode_malformed_tokens_rejected(bad):
    with pytest.raises(ValidationError):
        rle_decode(bad, 4, 4)


def test_encode_all_zero_is_empty_string():
    assert rle_encode(np.zeros((4, 2), dtype=np.uint8)) == ""


def test_encode_all_ones_is_single_run():
    assert rle_encode(np.ones((4, 2), dtype=np.uint8)) == "1 8"


def test_encode_decode_roundtrip_example():
    assert rle_encode(rle_decode("1 3", 4, 2)) == "1 3"


def test_encode_rejects_non_binary():
    with pytest.raises(ValidationError):
        rle_encode(np.full((2, 2), 3))


@given(
    arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)),
           elements=st.integers(0, 1))
)
@settings(max_examples=200, deadline=None)
def test_roundtrip_mask_property(mask):
    assert np.array_equal(rle_decode(rle_encode(mask), *mask.shape), mask)


def test_canonical_reencoding_seeded_masks():
    rng = np.random.default_rng(7)
    for _ in range(200):
        h, w = rng.integers(1, 20, size=2)
        mask = (rng.random((h, w)) < 0.4).astype(np.uint8)
        rle = rle_encode(mask)
        assert rle_encode(rle_decode(rle, h, w)) == rle


def test_flip_commutes_with_codec():
    # encode(flip(decode(r))) equals the encoding of the index-transformed mask
    rng = np.random.default_rng(11)
    for _ in range(50):
        h, w = rng.integers(2, 10, size=2)
        mask = (rng.random((h, w)) < 0.3).astype(np.uint8)
        rle = rle_encode(mask)
        flipped = rle_decode(rle, h, w)[:, ::-1]
        transformed = np.zeros_like(mask)
        for r in range(h):
            for c in range(w):
                transformed[r, w - 1 - c] = mask[r, c]
        assert rle_encode(flipped) == rle_encode(transformed)
