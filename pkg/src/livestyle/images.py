"""Image decode/encode, resizing and range normalization.

All numeric pipelines consume and produce :class:`ImageTensor`; this module
is the only place that touches image codecs. Tensors are H x W x 3 float32
with a declared value range:

* ``UNIT``     - every element in [0, 1]
* ``BACKBONE`` - mean-subtracted / std-divided per channel, ready for
  feature extraction

PNG and JPEG are the only supported formats; alpha channels are dropped at
decode. All operations are pure functions, safe to call concurrently.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImage, InvalidSize, RangeMismatch, UnsupportedFormat

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


class Range(enum.Enum):
    UNIT = "unit"
    BACKBONE = "backbone"


class ImageFormat(enum.Enum):
    PNG = "PNG"
    JPEG = "JPEG"


@dataclass
class RawImage:
    """Decoded 8-bit RGB image, row-major interleaved."""

    width: int
    height: int
    channels: int
    pixels: np.ndarray  # uint8, shape (height, width, 3)

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.channels != 3:
            raise ValueError(f"RawImage must have 3 channels, got {self.channels}")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )


@dataclass
class ImageTensor:
    """Float image with a declared value range."""

    height: int
    width: int
    channels: int
    data: np.ndarray  # float32, shape (height, width, 3)
    range: Range

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.channels != 3:
            raise ValueError(f"ImageTensor must have 3 channels, got {self.channels}")
        if self.data.shape != (self.height, self.width, 3):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if not np.isfinite(self.data).all():
            raise ValueError("ImageTensor contains NaN or infinity")
        if self.range is Range.UNIT:
            lo, hi = float(self.data.min()), float(self.data.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"UNIT tensor out of [0,1]: min={lo}, max={hi}")

    @classmethod
    def from_array(cls, data: np.ndarray, range: Range) -> "ImageTensor":
        data = np.asarray(data, dtype=np.float32)
        h, w, _ = data.shape
        return cls(height=h, width=w, channels=3, data=data, range=range)


@dataclass
class PreprocessSpec:
    """Target size and per-channel statistics for backbone preprocessing."""

    target_size: int
    channel_means: np.ndarray = field(
        default_factory=lambda: np.array([0.485, 0.456, 0.406], dtype=np.float32)
    )
    channel_stds: np.ndarray = field(
        default_factory=lambda: np.array([0.229, 0.224, 0.225], dtype=np.float32)
    )
    resize_mode: str = "bilinear"

    def __post_init__(self):
        self.channel_means = np.asarray(self.channel_means, dtype=np.float32).reshape(3)
        self.channel_stds = np.asarray(self.channel_stds, dtype=np.float32).reshape(3)
        if self.target_size < 32:
            raise ValueError(f"target_size must be >= 32, got {self.target_size}")
        if not (self.channel_stds > 0).all():
            raise ValueError("channel_stds must all be > 0")
        if self.resize_mode != "bilinear":
            raise ValueError(f"unsupported resize_mode {self.resize_mode!r}")


def decode_image(data: bytes) -> RawImage:
    """Decode a PNG or JPEG byte stream into an 8-bit RGB image.

    Alpha channels are dropped; palette and grayscale images are expanded
    to RGB.
    """
    if not (data.startswith(_PNG_MAGIC) or data.startswith(_JPEG_MAGIC)):
        raise UnsupportedFormat("byte stream is neither PNG nor JPEG")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise CorruptImage(f"decoder failure: {exc}") from exc
    if img.format not in ("PNG", "JPEG"):
        raise UnsupportedFormat(f"unsupported image format {img.format!r}")
    if img.mode != "RGB":
        if img.mode in ("P", "LA", "PA"):
            img = img.convert("RGBA")
        if img.mode == "RGBA":
            # convert() drops the alpha channel without compositing
            img = img.convert("RGB")
        else:
            img = img.convert("RGB")
    pixels = np.asarray(img, dtype=np.uint8)
    return RawImage(width=img.width, height=img.height, channels=3, pixels=pixels)


def to_unit_tensor(img: RawImage) -> ImageTensor:
    """Scale 8-bit pixels to floats in [0, 1] (pixel / 255 exactly)."""
    data = img.pixels.astype(np.float32) / np.float32(255.0)
    return ImageTensor.from_array(data, Range.UNIT)


def _axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel-center sample positions, clamped at the borders.
    scale = n_in / n_out
    centers = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    lo = np.floor(centers).astype(np.int64)
    frac = centers - lo
    i0 = np.clip(lo, 0, n_in - 1)
    i1 = np.clip(lo + 1, 0, n_in - 1)
    return i0, i1, frac


def resize(t: ImageTensor, side: int) -> ImageTensor:
    """Bilinear resize to a square ``side x side`` image.

    Resizing to the current size is an exact identity; the range tag is
    preserved.
    """
    if side < 1:
        raise InvalidSize(f"side must be >= 1, got {side}")
    if side == t.height == t.width:
        return ImageTensor.from_array(t.data.copy(), t.range)
    y0, y1, fy = _axis_coords(side, t.height)
    x0, x1, fx = _axis_coords(side, t.width)
    src = t.data.astype(np.float64)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    if t.range is Range.UNIT:
        out = np.clip(out, 0.0, 1.0)
    return ImageTensor.from_array(out, t.range)


def normalize(t: ImageTensor, spec: PreprocessSpec) -> ImageTensor:
    """Per-channel (v - mean) / std; UNIT -> BACKBONE."""
    if t.range is not Range.UNIT:
        raise RangeMismatch("normalize expects a UNIT tensor")
    data = (t.data - spec.channel_means) / spec.channel_stds
    return ImageTensor.from_array(data, Range.BACKBONE)


def denormalize(t: ImageTensor, spec: PreprocessSpec) -> ImageTensor:
    """Exact inverse of :func:`normalize`, then clip to [0, 1]; BACKBONE -> UNIT."""
    if t.range is not Range.BACKBONE:
        raise RangeMismatch("denormalize expects a BACKBONE tensor")
    data = t.data * spec.channel_stds + spec.channel_means
    return ImageTensor.from_array(np.clip(data, 0.0, 1.0), Range.UNIT)


def encode_image(t: ImageTensor, format: ImageFormat = ImageFormat.PNG) -> bytes:
    """Encode a UNIT tensor to PNG or JPEG bytes.

    Elements are clipped to [0, 1], scaled to [0, 255] and rounded half-up,
    so encoding is deterministic byte-for-byte.
    """
    if t.range is not Range.UNIT:
        raise RangeMismatch("encode_image expects a UNIT tensor")
    scaled = np.clip(t.data.astype(np.float64), 0.0, 1.0) * 255.0
    pixels = np.floor(scaled + 0.5).astype(np.uint8)
    img = Image.fromarray(pixels, mode="RGB")
    buf = io.BytesIO()
    if format is ImageFormat.PNG:
        img.save(buf, format="PNG")
    else:
        img.save(buf, format="JPEG", quality=95)
    return buf.getvalue()
