"""Image decoding and the color-space/quantization transforms.

Everything here is a pure function; buffers are frozen and their pixel
arrays are marked read-only, so they are safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from fruitdx.errors import ImageDecodeError, ImageFormatError, PreconditionError

RGB8 = "rgb8"
LAB = "lab"
HSV = "hsv"
GRAY8 = "gray8"

_CHANNELS = {RGB8: 3, LAB: 3, HSV: 3, GRAY8: 1}
_INT_SPACES = (RGB8, GRAY8)

# sRGB linear -> XYZ under the D65 white point.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])
_LAB_DELTA = 6.0 / 29.0

# Quantization ranges per color space: (low, width) per channel. RGB uses
# width 256 (not 255) so all bins are equal width; see quantize_uniform.
_QUANT_RANGES = {
    RGB8: ((0.0, 256.0), (0.0, 256.0), (0.0, 256.0)),
    HSV: ((0.0, 360.0), (0.0, 1.0), (0.0, 1.0)),
    LAB: ((0.0, 100.0), (-128.0, 256.0), (-128.0, 256.0)),
}


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Decoded raster with an explicit color-space tag.

    `data` is (height, width) for gray8 and (height, width, 3) otherwise;
    uint8 for rgb8/gray8, float64 for lab/hsv. The array is read-only.
    """

    width: int
    height: int
    space: str
    data: np.ndarray

    def __post_init__(self):
        if self.space not in _CHANNELS:
            raise PreconditionError(f"unknown color space {self.space!r}")
        nch = _CHANNELS[self.space]
        expect = (self.height, self.width) if nch == 1 else (self.height, self.width, nch)
        if self.data.shape != expect:
            raise PreconditionError(
                f"data shape {self.data.shape} does not match "
                f"{self.width}x{self.height} {self.space}"
            )
        want = np.uint8 if self.space in _INT_SPACES else np.float64
        if self.data.dtype != want:
            raise PreconditionError(f"{self.space} buffer must be {want}, got {self.data.dtype}")
        self.data.setflags(write=False)

    @property
    def channels(self) -> int:
        return _CHANNELS[self.space]


@dataclass(frozen=True, eq=False)
class QuantizedImage:
    """Per-pixel bin indices after uniform quantization."""

    width: int
    height: int
    bins: int
    indices: np.ndarray  # (height, width) int32

    def __post_init__(self):
        if self.indices.shape != (self.height, self.width):
            raise PreconditionError("index map shape mismatch")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.bins):
            raise PreconditionError("bin index out of range")
        self.indices.setflags(write=False)


def _buffer(space: str, data: np.ndarray) -> ImageBuffer:
    h, w = data.shape[:2]
    return ImageBuffer(width=w, height=h, space=space, data=data)


def load_image(path) -> ImageBuffer:
    """Decode a PNG or JPEG file into an rgb8 buffer.

    Any alpha channel is discarded. Missing or unreadable files raise
    ImageDecodeError; files in other formats raise ImageFormatError.
    """
    p = Path(path)
    try:
        with Image.open(p) as im:
            fmt = im.format
            if fmt not in ("PNG", "JPEG"):
                raise ImageFormatError(f"unsupported image format {fmt!r}: {p}")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except ImageFormatError:
        raise
    except (FileNotFoundError, UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image {p}: {exc}") from exc
    return _buffer(RGB8, arr)


def _require_space(img: ImageBuffer, space: str, op: str) -> None:
    if img.space != space:
        raise PreconditionError(f"{op} requires a {space} buffer, got {img.space}")


def rgb_to_lab(img: ImageBuffer) -> ImageBuffer:
    """sRGB to CIE L*a*b* under the D65 reference white.

    L* is clamped to [0, 100]; the sRGB matrix rows sum to slightly more
    than one, so unclamped white lands a hair above 100.
    """
    _require_space(img, RGB8, "rgb_to_lab")
    srgb = img.data.astype(np.float64) / 255.0
    lin = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB_TO_XYZ.T
    t = xyz / _D65_WHITE
    f = np.where(t > _LAB_DELTA**3, np.cbrt(t), t / (3.0 * _LAB_DELTA**2) + 4.0 / 29.0)
    out = np.empty_like(xyz)
    out[..., 0] = np.clip(116.0 * f[..., 1] - 16.0, 0.0, 100.0)
    out[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    out[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return _buffer(LAB, out)


def rgb_to_hsv(img: ImageBuffer) -> ImageBuffer:
    """Standard hexcone HSV: H in [0, 360), S and V in [0, 1].

    Achromatic pixels (S = 0) get H = 0.
    """
    _require_space(img, RGB8, "rgb_to_hsv")
    rgb = img.data.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.select(
        [delta == 0, mx == r, mx == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    )
    out = np.empty_like(rgb)
    out[..., 0] = (60.0 * hue) % 360.0
    out[..., 1] = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    out[..., 2] = mx
    return _buffer(HSV, out)


def rgb_to_gray(img: ImageBuffer) -> ImageBuffer:
    """BT.601 luma: round(0.299 R + 0.587 G + 0.114 B), half-to-even."""
    _require_space(img, RGB8, "rgb_to_gray")
    rgb = img.data.astype(np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return _buffer(GRAY8, np.clip(np.rint(y), 0, 255).astype(np.uint8))


def quantize_uniform(img: ImageBuffer, levels_per_channel: int) -> QuantizedImage:
    """Uniform per-channel quantization to levels^3 interleaved bins.

    Each channel maps to floor((v - low) / width * levels), clamped to
    levels - 1; the bin index is c0 * levels^2 + c1 * levels + c2.
    """
    if levels_per_channel < 1:
        raise PreconditionError("levels_per_channel must be >= 1")
    if img.channels != 3:
        raise PreconditionError("quantize_uniform needs a 3-channel image")
    levels = levels_per_channel
    ranges = _QUANT_RANGES[img.space]
    data = img.data.astype(np.float64)
    idx = np.zeros(data.shape[:2], dtype=np.int64)
    for ch, (low, width) in enumerate(ranges):
        q = np.floor((data[..., ch] - low) / width * levels).astype(np.int64)
        np.clip(q, 0, levels - 1, out=q)
        idx = idx * levels + q
    return QuantizedImage(
        width=img.width,
        height=img.height,
        bins=levels**3,
        indices=idx.astype(np.int32),
    )


def save_png(img: ImageBuffer, path) -> None:
    """Write an rgb8 or gray8 buffer as a PNG file."""
    if img.space not in _INT_SPACES:
        raise PreconditionError("only rgb8/gray8 buffers can be written as PNG")
    Image.fromarray(np.asarray(img.data)).save(Path(path), format="PNG")


def save_mask_png(mask: np.ndarray, path) -> None:
    """Write a boolean mask as a 1-channel PNG with values 0/255."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(Path(path), format="PNG")


def load_mask_png(path) -> np.ndarray:
    """Read a 1-channel PNG into a boolean mask (nonzero means true)."""
    p = Path(path)
    try:
        with Image.open(p) as im:
            arr = np.asarray(im.convert("L"))
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode mask {p}: {exc}") from exc
    return arr > 0
