import io

import numpy as np
import pytest
from PIL import Image

from livestyle.backbone import random_backbone, tiny_backbone_spec
from livestyle.images import ImageTensor, PreprocessSpec, Range


def make_unit_image(seed: int, side: int = 32) -> ImageTensor:
    rng = np.random.default_rng(seed)
    return ImageTensor.from_array(rng.uniform(0.0, 1.0, size=(side, side, 3)), Range.UNIT)


def make_png_bytes(seed: int, side: int = 48) -> bytes:
    rng = np.random.default_rng(seed)
    arr = (rng.uniform(0.0, 1.0, size=(side, side, 3)) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def blocky_image(seed: int, side: int = 32) -> ImageTensor:
    """Piecewise-constant color blocks plus mild noise; has the low-frequency
    structure a bottlenecked net can actually learn to reproduce."""
    rng = np.random.default_rng(seed)
    cells = max(2, side // 8)
    base = rng.uniform(0.2, 0.8, size=(cells, cells, 3))
    img = np.kron(base, np.ones((side // cells, side // cells, 1)))
    img = img + rng.normal(0.0, 0.05, size=img.shape)
    return ImageTensor.from_array(np.clip(img, 0.0, 1.0), Range.UNIT)


def shape_image(kind: str, seed: int, side: int = 32, invert: bool = False) -> ImageTensor:
    """White square or circle on black (optionally inverted), jittered
    position and radius."""
    rng = np.random.default_rng(seed)
    img = np.zeros((side, side, 3))
    cy = int(rng.integers(side // 3, side - side // 3))
    cx = int(rng.integers(side // 3, side - side // 3))
    rad = int(rng.integers(4, max(5, side // 4)))
    yy, xx = np.mgrid[0:side, 0:side]
    if kind == "square":
        mask = (np.abs(yy - cy) <= rad) & (np.abs(xx - cx) <= rad)
    elif kind == "circle":
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad**2
    else:
        raise ValueError(kind)
    img[mask] = 1.0
    if invert:
        img = 1.0 - img
    return ImageTensor.from_array(img, Range.UNIT)


@pytest.fixture(scope="session")
def tiny_model():
    return random_backbone(tiny_backbone_spec(), seed=0, input_spec=PreprocessSpec(target_size=64))
