"""Image and mask primitives: codecs, geometry, set operations, warping.

Pixel payloads are numpy arrays frozen read-only at construction, so every
operation here is a pure function over shareable values. PNG is the
canonical interchange format; masks travel as 8-bit grayscale with
0 = outside and 255 = inside.
"""

from __future__ import annotations

import io
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import _kernels
from .errors import DecodeError

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True, eq=False)
class ImageRGB:
    """8-bit RGB raster, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"expected (H, W, 3) uint8 pixels, got {px.shape} {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image dimensions must be at least 1x1")
        if not px.flags.c_contiguous:
            px = np.ascontiguousarray(px)
            object.__setattr__(self, "pixels", px)
        px.flags.writeable = False

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, ImageRGB) and np.array_equal(self.pixels, other.pixels)

    @staticmethod
    def from_array(arr: np.ndarray) -> "ImageRGB":
        return ImageRGB(np.ascontiguousarray(arr, dtype=np.uint8).copy())


@dataclass(frozen=True, eq=False)
class BitMask:
    """Binary segment mask, shape (height, width) bool."""

    bits: np.ndarray

    def __post_init__(self):
        bits = self.bits
        if bits.ndim != 2 or bits.dtype != np.bool_:
            raise ValueError(f"expected (H, W) bool bits, got {bits.shape} {bits.dtype}")
        if not bits.flags.c_contiguous:
            bits = np.ascontiguousarray(bits)
            object.__setattr__(self, "bits", bits)
        bits.flags.writeable = False

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other) -> bool:
        return isinstance(other, BitMask) and np.array_equal(self.bits, other.bits)

    @staticmethod
    def from_array(arr: np.ndarray) -> "BitMask":
        return BitMask(np.ascontiguousarray(arr, dtype=bool).copy())

    @staticmethod
    def zeros(width: int, height: int) -> "BitMask":
        return BitMask(np.zeros((height, width), dtype=bool))

    @staticmethod
    def full(width: int, height: int) -> "BitMask":
        return BitMask(np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class Point:
    """Sub-pixel image location, x = column, y = row."""

    x: float
    y: float


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel bounds."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"degenerate bbox {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1


@dataclass(frozen=True)
class AffineTransform2D:
    """Map (x, y) -> (a*x + b*y + c, d*x + e*y + f)."""

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def det(self) -> float:
        return self.a * self.e - self.b * self.d

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return (self.a * x + self.b * y + self.c, self.d * x + self.e * y + self.f)

    def inverse(self) -> "AffineTransform2D":
        det = self.det()
        if abs(det) < 1e-12:
            raise ValueError(f"transform is not invertible (det={det})")
        ia = self.e / det
        ib = -self.b / det
        id_ = -self.d / det
        ie = self.a / det
        ic = -(ia * self.c + ib * self.f)
        if_ = -(id_ * self.c + ie * self.f)
        return AffineTransform2D(ia, ib, ic, id_, ie, if_)

    @staticmethod
    def identity() -> "AffineTransform2D":
        return AffineTransform2D(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @staticmethod
    def scale_translate(s: float, tx: float, ty: float) -> "AffineTransform2D":
        return AffineTransform2D(s, 0.0, tx, 0.0, s, ty)


def _walk_png_chunks(data: bytes) -> None:
    """Structural PNG validation that reports the byte offset of defects."""
    if len(data) < 8 or data[:8] != _PNG_SIGNATURE:
        bad = next((i for i in range(min(8, len(data))) if i >= len(data) or data[i] != _PNG_SIGNATURE[i]), len(data))
        raise DecodeError(f"bad PNG signature at byte {bad}")
    off = 8
    saw_end = False
    while off < len(data):
        if off + 8 > len(data):
            raise DecodeError(f"truncated chunk header at byte {off}")
        length = int.from_bytes(data[off : off + 4], "big")
        ctype = data[off + 4 : off + 8]
        if not all(65 <= c <= 122 for c in ctype):
            raise DecodeError(f"invalid chunk type at byte {off + 4}")
        end = off + 8 + length + 4
        if end > len(data):
            raise DecodeError(f"truncated chunk {ctype.decode('latin1')} at byte {off}")
        crc = int.from_bytes(data[end - 4 : end], "big")
        if crc != zlib.crc32(data[off + 4 : end - 4]):
            raise DecodeError(f"CRC mismatch in chunk {ctype.decode('latin1')} at byte {off}")
        if ctype == b"IEND":
            saw_end = True
            break
        off = end
    if not saw_end:
        raise DecodeError(f"missing IEND chunk, stream ends at byte {len(data)}")


def decode_image(data: bytes) -> ImageRGB:
    """Decode a PNG (pixel-exact) or JPEG stream into an RGB image."""
    if data[:8] == _PNG_SIGNATURE or (len(data) < 8 and data == _PNG_SIGNATURE[: len(data)]):
        _walk_png_chunks(data)
    elif data[:2] == b"\xff\xd8":
        pass  # JPEG, hand straight to the codec
    else:
        raise DecodeError("unrecognized image signature at byte 0")
    try:
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"image decode failed after {len(data)} bytes: {exc}") from exc
    return ImageRGB(arr.copy())


def decode_mask(data: bytes) -> BitMask:
    """Decode a grayscale mask PNG; values >= 128 are inside."""
    _walk_png_chunks(data)
    try:
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("L"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"mask decode failed after {len(data)} bytes: {exc}") from exc
    return BitMask(arr >= 128)


def encode_png(item: ImageRGB | BitMask) -> bytes:
    """Losslessly encode an image (RGB) or mask (8-bit gray, 0/255)."""
    if isinstance(item, ImageRGB):
        im = Image.fromarray(item.pixels, mode="RGB")
    elif isinstance(item, BitMask):
        im = Image.fromarray(item.bits.astype(np.uint8) * 255, mode="L")
    else:
        raise TypeError(f"cannot encode {type(item).__name__}")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def mask_iou(a: BitMask, b: BitMask) -> float:
    """Intersection over union; 0.0 when both masks are empty."""
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"mask dimensions differ: {a.bits.shape} vs {b.bits.shape}")
    inter = int(np.logical_and(a.bits, b.bits).sum())
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 0.0
    return inter / union


def mask_bbox(m: BitMask) -> BBox:
    """Tightest axis-aligned box containing all set bits."""
    ys, xs = np.nonzero(m.bits)
    if ys.size == 0:
        raise ValueError("cannot take bbox of an empty mask")
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def dilate(m: BitMask, radius: int) -> BitMask:
    """Chebyshev dilation with a (2r+1)^2 square structuring element."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return m
    bits = m.bits
    h, w = bits.shape
    out = np.zeros_like(bits)
    for dy in range(-radius, radius + 1):
        ys0, ys1 = max(0, dy), min(h, h + dy)
        yd0, yd1 = max(0, -dy), min(h, h - dy)
        for dx in range(-radius, radius + 1):
            xs0, xs1 = max(0, dx), min(w, w + dx)
            xd0, xd1 = max(0, -dx), min(w, w - dx)
            out[yd0:yd1, xd0:xd1] |= bits[ys0:ys1, xs0:xs1]
    return BitMask(out)


def erode(m: BitMask, radius: int) -> BitMask:
    """Chebyshev erosion, the dual of :func:`dilate`."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return m
    inv = BitMask(~m.bits)
    return BitMask(~dilate(inv, radius).bits)


def warp_affine(src: ImageRGB | BitMask, t: AffineTransform2D, out_w: int, out_h: int):
    """Inverse-mapping affine warp.

    Images are sampled bilinearly, masks nearest-neighbor; samples that
    land outside the source raster become black / unset. Returns the same
    kind as ``src``.
    """
    inv = t.inverse()
    coeffs = np.array([inv.a, inv.b, inv.c, inv.d, inv.e, inv.f], dtype=np.float64)
    if isinstance(src, ImageRGB):
        return ImageRGB(_kernels.warp_bilinear_rgb(src.pixels, coeffs, out_h, out_w))
    if isinstance(src, BitMask):
        warped = _kernels.warp_nearest_mask(src.bits.astype(np.uint8), coeffs, out_h, out_w)
        return BitMask(warped.astype(bool))
    raise TypeError(f"cannot warp {type(src).__name__}")
