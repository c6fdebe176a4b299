"""8-bit raster images and the scorecard preprocessing kernels.

Colour images are stored in BGR sample order.  All kernels are pure: they
return a new :class:`RasterImage` and never touch their input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError, InvalidParameterError, InvalidRoiError

# Execution order.  The median runs before the closing: on the inverted image,
# impulse noise inside a stroke is a light hole that a 15x15 closing would
# widen until the stroke disappears.
STAGES = ("gray", "gamma", "invert", "median", "dilate", "erode")


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Owned 8-bit pixel grid, shape ``(height, width)`` or ``(height, width, 3)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            if px.size and (np.min(px) < 0 or np.max(px) > 255):
                raise InvalidInputError("samples must lie in [0, 255]")
            px = px.astype(np.uint8)
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[:, :, 0]
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise InvalidInputError(f"unsupported pixel array shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError("image must be at least 1x1")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_bytes(cls, width: int, height: int, channels: int, data: bytes) -> RasterImage:
        if channels not in (1, 3):
            raise InvalidInputError("channels must be 1 or 3")
        if len(data) != width * height * channels:
            raise InvalidInputError(
                f"expected {width * height * channels} samples, got {len(data)}"
            )
        arr = np.frombuffer(data, dtype=np.uint8)
        shape = (height, width) if channels == 1 else (height, width, 3)
        return cls(arr.reshape(shape).copy())

    @classmethod
    def filled(cls, width: int, height: int, value=0, channels: int = 1) -> RasterImage:
        shape = (height, width) if channels == 1 else (height, width, channels)
        return cls(np.full(shape, value, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self):
        return f"RasterImage({self.width}x{self.height}x{self.channels})"


@dataclass(frozen=True)
class Roi:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise InvalidRoiError(f"negative roi offset ({self.x}, {self.y})")
        if self.w < 1 or self.h < 1:
            raise InvalidRoiError(f"roi extent must be >= 1, got {self.w}x{self.h}")

    @classmethod
    def full(cls, img: RasterImage) -> Roi:
        return cls(0, 0, img.width, img.height)


@dataclass(frozen=True)
class PreprocessParams:
    gamma: float = 7.0
    morph_kernel: int = 15
    median_kernel: int = 3

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma}")
        _check_kernel(self.morph_kernel)
        _check_kernel(self.median_kernel)


def _check_kernel(k):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise InvalidParameterError(f"kernel size must be an integer, got {k!r}")
    if k < 1 or k % 2 == 0:
        raise InvalidParameterError(f"kernel size must be odd and >= 1, got {k}")


def _require_gray(img: RasterImage, op: str):
    if img.channels != 1:
        raise InvalidInputError(f"{op} expects a single-channel image")


def round_half_up(x: np.ndarray) -> np.ndarray:
    # floor(x + 0.5) misrounds 0.49999999999999994; x - floor(x) is exact.
    fl = np.floor(x)
    return fl + (x - fl >= 0.5)


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_up(x), 0, 255).astype(np.uint8)


def to_grayscale(img: RasterImage) -> RasterImage:
    """Weighted luma 0.299 R + 0.587 G + 0.114 B, rounded half up."""
    if img.channels != 3:
        raise InvalidInputError("to_grayscale expects a 3-channel BGR image")
    px = img.pixels.astype(np.float64)
    b, g, r = px[..., 0], px[..., 1], px[..., 2]
    return RasterImage(_to_u8(0.299 * r + 0.587 * g + 0.114 * b))


def power_lut(gamma: float) -> np.ndarray:
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    vals = np.array([255.0 * math.pow(i / 255.0, gamma) for i in range(256)])
    return _to_u8(vals)


def power_transform(img: RasterImage, gamma: float) -> RasterImage:
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    _require_gray(img, "power_transform")
    return RasterImage(power_lut(gamma)[img.pixels])


def invert(img: RasterImage) -> RasterImage:
    _require_gray(img, "invert")
    return RasterImage(255 - img.pixels)


def _window_reduce_1d(px: np.ndarray, k: int, axis: int, op) -> np.ndarray:
    # Doubling: span-2p extrema from two overlapping span-p extrema, then one
    # final combine covers k; log2(k) passes instead of k.
    r = k // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    acc = np.pad(px, pad, mode="edge")
    n = px.shape[axis]
    span = 1
    while span * 2 <= k:
        m = acc.shape[axis] - span
        acc = op(acc.take(range(m), axis=axis), acc.take(range(span, span + m), axis=axis))
        span *= 2
    rest = k - span
    return op(acc.take(range(n), axis=axis), acc.take(range(rest, rest + n), axis=axis))


def _running(px: np.ndarray, k: int, op) -> np.ndarray:
    # A square max/min window is separable into a row pass and a column pass.
    return _window_reduce_1d(_window_reduce_1d(px, k, 1, op), k, 0, op)


def dilate(img: RasterImage, k: int) -> RasterImage:
    """Grey dilation: max over a k x k square, edge-replicated border."""
    _check_kernel(k)
    _require_gray(img, "dilate")
    if k == 1:
        return RasterImage(img.pixels.copy())
    return RasterImage(_running(img.pixels, k, np.maximum))


def erode(img: RasterImage, k: int) -> RasterImage:
    """Grey erosion: min over a k x k square, edge-replicated border."""
    _check_kernel(k)
    _require_gray(img, "erode")
    if k == 1:
        return RasterImage(img.pixels.copy())
    return RasterImage(_running(img.pixels, k, np.minimum))


# Compare-exchange network that leaves the median of 9 in slot 4.
_MED9 = (
    (1, 2), (4, 5), (7, 8), (0, 1), (3, 4), (6, 7), (1, 2), (4, 5), (7, 8),
    (0, 3), (5, 8), (4, 7), (3, 6), (1, 4), (2, 5), (4, 7), (4, 2), (6, 4), (4, 2),
)


def _median3(padded: np.ndarray, h: int, w: int) -> np.ndarray:
    p = [padded[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)]
    for a, b in _MED9:
        p[a], p[b] = np.minimum(p[a], p[b]), np.maximum(p[a], p[b])
    return p[4]


def median_blur(img: RasterImage, k: int) -> RasterImage:
    """Median of each k x k window (sorted index k*k // 2), edge-replicated border."""
    _check_kernel(k)
    _require_gray(img, "median_blur")
    if k == 1:
        return RasterImage(img.pixels.copy())
    r = k // 2
    padded = np.pad(img.pixels, r, mode="edge")
    h, w = img.pixels.shape
    if k == 3:
        return RasterImage(_median3(padded, h, w))
    mid = (k * k) // 2
    out = np.empty((h, w), dtype=np.uint8)
    # Chunk rows so a 15x15 window on a full frame stays within a few MB.
    step = max(1, (1 << 22) // (w * k * k))
    for y0 in range(0, h, step):
        y1 = min(h, y0 + step)
        win = sliding_window_view(padded[y0 : y1 + 2 * r], (k, k))
        flat = win.reshape(y1 - y0, w, k * k)
        out[y0:y1] = np.partition(flat, mid, axis=-1)[..., mid]
    return RasterImage(out)


def crop(img: RasterImage, roi: Roi) -> RasterImage:
    if roi.x + roi.w > img.width or roi.y + roi.h > img.height:
        raise InvalidRoiError(
            f"roi {roi} exceeds image bounds {img.width}x{img.height}"
        )
    return RasterImage(img.pixels[roi.y : roi.y + roi.h, roi.x : roi.x + roi.w].copy())


def preprocess_scorecard(
    img: RasterImage,
    roi: Roi | None = None,
    params: PreprocessParams | None = None,
    stages=STAGES,
) -> RasterImage:
    """Crop to the scorecard and run the enhancement chain.

    Stages always execute in the fixed order of :data:`STAGES`; ``stages``
    only selects which of them run.  ``gray`` is skipped for images that are
    already single-channel.
    """
    params = params or PreprocessParams()
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise InvalidParameterError(f"unknown preprocessing stage(s): {sorted(unknown)}")
    out = crop(img, roi) if roi is not None else img
    if out.channels == 3:
        if "gray" not in stages:
            raise InvalidParameterError("colour input requires the 'gray' stage")
        out = to_grayscale(out)
    if "gamma" in stages:
        out = power_transform(out, params.gamma)
    if "invert" in stages:
        out = invert(out)
    if "median" in stages:
        out = median_blur(out, params.median_kernel)
    if "dilate" in stages:
        out = dilate(out, params.morph_kernel)
    if "erode" in stages:
        out = erode(out, params.morph_kernel)
    return out


# --- PNM / PNG I/O -------------------------------------------------------


def _read_token(buf: bytes, pos: int):
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise InvalidInputError("truncated PNM header")
    return buf[start:pos], pos


def decode_pnm(buf: bytes) -> RasterImage:
    """Decode binary PGM (P5) or PPM (P6) with maxval 255.

    PPM stores RGB; the returned image is BGR.
    """
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise InvalidInputError(f"unsupported PNM magic {magic!r}")
    try:
        w_tok, pos = _read_token(buf, pos)
        h_tok, pos = _read_token(buf, pos)
        m_tok, pos = _read_token(buf, pos)
        width, height, maxval = int(w_tok), int(h_tok), int(m_tok)
    except ValueError as exc:
        raise InvalidInputError(f"bad PNM header: {exc}") from None
    if maxval != 255:
        raise InvalidInputError(f"only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte before the raster
    channels = 1 if magic == b"P5" else 3
    size = width * height * channels
    data = buf[pos : pos + size]
    if len(data) != size:
        raise InvalidInputError(f"truncated PNM raster: {len(data)} of {size} bytes")
    img = RasterImage.from_bytes(width, height, channels, data)
    if channels == 3:
        img = RasterImage(img.pixels[:, :, ::-1])
    return img


def encode_pnm(img: RasterImage) -> bytes:
    if img.channels == 1:
        header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
        return header + img.data
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(img.pixels[:, :, ::-1]).tobytes()


def read_image(path) -> RasterImage:
    path = Path(path)
    if path.suffix.lower() == ".png":
        return _read_png(path)
    return decode_pnm(path.read_bytes())


def write_image(img: RasterImage, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        _write_png(img, path)
        return
    path.write_bytes(encode_pnm(img))


def _pil():
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - depends on the environment
        raise InvalidInputError("PNG support requires Pillow (pip install wicketlens[png])") from None
    return Image


def _read_png(path: Path) -> RasterImage:
    Image = _pil()
    with Image.open(path) as im:
        if im.mode in ("L", "1", "I;16", "I"):
            return RasterImage(np.asarray(im.convert("L")))
        rgb = np.asarray(im.convert("RGB"))
    return RasterImage(rgb[:, :, ::-1])


def _write_png(img: RasterImage, path: Path) -> None:
    Image = _pil()
    if img.channels == 1:
        Image.fromarray(img.pixels, mode="L").save(path)
    else:
        Image.fromarray(np.ascontiguousarray(img.pixels[:, :, ::-1]), mode="RGB").save(path)
