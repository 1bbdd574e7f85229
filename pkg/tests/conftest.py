import numpy as np
import pytest

from stickerforge import imaging


@pytest.fixture
def rng():
    return np.random.default_rng(20240131)


def solid_image(width, height, rgb):
    return imaging.PixelImage.full(width, height, rgb)


def random_image(rng, width, height):
    return imaging.PixelImage(
        rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    )


def mask_from_rows(rows):
    """Build a mask from strings of '#' (true) and '.' (false)."""
    bits = np.array([[c == "#" for c in row] for row in rows], dtype=bool)
    return imaging.BinaryMask(bits)


def rect_mask(size, x, y, w, h):
    bits = np.zeros((size, size), dtype=bool)
    bits[y : y + h, x : x + w] = True
    return imaging.BinaryMask(bits)
