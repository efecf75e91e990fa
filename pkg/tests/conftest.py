import numpy as np
import pytest

from steelseg.data import MaskSet, ImageRecord
from steelseg.model import ModelConfig


def tiny_model_config(height=8, width=8, base=4):
    """Smallest usable config: 2 stages, ~3.6k parameters."""
    return ModelConfig(
        stages=2,
        input_shape=(height, width, 3),
        base_channels=base,
        decoder_channels=(8, 8),
    )


def make_record(image_id, masks, intensity=None, seed=0):
    """Record whose pixels are bright where any mask is set, noisy elsewhere."""
    masks = np.asarray(masks, dtype=np.uint8)
    h, w, _ = masks.shape
    rng = np.random.default_rng(seed)
    pixels = rng.integers(40, 120, size=(h, w), dtype=np.uint8)
    pixels = np.where(masks.any(axis=2), intensity if intensity else 220, pixels)
    pixels = np.repeat(pixels[:, :, None].astype(np.uint8), 3, axis=2)
    return ImageRecord(image_id, pixels, MaskSet(masks))


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-criterion pass/fail lines past output capture."""
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_config():
    return tiny_model_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
