"""Image decoding and color-space conversion.

All pixel math downstream works on float64 arrays produced here: RGB in
[0, 1] plus an HSV view (hue in degrees [0, 360)) cached at decode time.
Conversions are vectorized; HSV follows the hexcone model and LUV uses the
D65 white point.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import DecodeError, UnsupportedFormat

MAX_LONG_SIDE = 512

_SUPPORTED = {"PNG", "JPEG", "BMP", "GIF", "TIFF", "WEBP"}


@dataclass(frozen=True)
class ImageBuffer:
    """Decoded pixels: RGB in [0, 1] and HSV with hue in degrees.

    original_width/height are the pre-downscale dimensions; width/height
    are the buffer's.
    """

    rgb: np.ndarray  # (h, w, 3) float64 in [0, 1]
    hsv: np.ndarray  # (h, w, 3): hue in [0, 360), sat/value in [0, 1]
    original_width: int
    original_height: int

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ValueError("rgb must have shape (h, w, 3)")
        if self.hsv.shape != self.rgb.shape:
            raise ValueError("hsv must match rgb shape")

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


def buffer_from_rgb(rgb: np.ndarray, original_size: tuple[int, int] | None = None) -> ImageBuffer:
    """Wrap a float RGB array (values in [0, 1]) as an ImageBuffer."""
    rgb = np.asarray(rgb, dtype=float)
    hsv = rgb_to_hsv(rgb)
    hsv = np.concatenate([hsv[..., :1] * 360.0, hsv[..., 1:]], axis=-1)
    if original_size is None:
        original_size = (rgb.shape[1], rgb.shape[0])
    return ImageBuffer(
        rgb=rgb, hsv=hsv, original_width=original_size[0], original_height=original_size[1]
    )


def decode_image(
    data: bytes | str | Path, max_long_side: int = MAX_LONG_SIDE
) -> ImageBuffer:
    """Decode an image payload (bytes) or file path to an ImageBuffer.

    Images longer than `max_long_side` on their longest side are downscaled
    with area averaging to that size, preserving aspect ratio; the recorded
    original dimensions are the pre-downscale ones.
    """
    if isinstance(data, (str, Path)):
        path = Path(data)
        if not path.exists():
            raise DecodeError(f"image file not found: {path}")
        data = path.read_bytes()
        source = str(path)
    else:
        source = "<bytes>"
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"unrecognized image format: {source}") from exc
    except OSError as exc:
        raise DecodeError(f"failed to decode {source}: {exc}") from exc
    if img.format is not None and img.format not in _SUPPORTED:
        raise UnsupportedFormat(f"unsupported image format {img.format}: {source}")
    ow, oh = img.size
    if ow < 1 or oh < 1:
        raise DecodeError(f"empty image: {source}")
    if img.mode != "RGB":
        img = img.convert("RGB")
    if max(ow, oh) > max_long_side:
        if ow >= oh:
            nw = max_long_side
            nh = max(1, round(oh * max_long_side / ow))
        else:
            nh = max_long_side
            nw = max(1, round(ow * max_long_side / oh))
        img = img.resize((nw, nh), Image.Resampling.BOX)
    rgb = np.asarray(img, dtype=np.float64) / 255.0
    return buffer_from_rgb(rgb, original_size=(ow, oh))


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV. All channels in [0, 1]; hue wraps at 1."""
    rgb = np.asarray(rgb, dtype=float)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    # Hue sector by which channel is the max; 0 where delta == 0.
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(
        maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc)
    )
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse of rgb_to_hsv (hexcone model, hue in [0, 1))."""
    hsv = np.asarray(hsv, dtype=float)
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


# sRGB -> XYZ (linear, D65) matrix.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XN, _YN, _ZN = 0.95047, 1.0, 1.08883  # D65 white
_UN = 4.0 * _XN / (_XN + 15.0 * _YN + 3.0 * _ZN)
_VN = 9.0 * _YN / (_XN + 15.0 * _YN + 3.0 * _ZN)


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_luv(rgb: np.ndarray) -> np.ndarray:
    """sRGB in [0, 1] -> CIE L*u*v* (D65). Black maps to (0, 0, 0)."""
    lin = _srgb_to_linear(np.asarray(rgb, dtype=float))
    xyz = lin @ _RGB_TO_XYZ.T
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    denom = x + 15.0 * y + 3.0 * z
    safe = np.where(denom > 0, denom, 1.0)
    up = np.where(denom > 0, 4.0 * x / safe, _UN)
    vp = np.where(denom > 0, 9.0 * y / safe, _VN)
    yr = y / _YN
    lstar = np.where(yr > (6.0 / 29.0) ** 3, 116.0 * np.cbrt(yr) - 16.0, (29.0 / 3.0) ** 3 * yr)
    u = 13.0 * lstar * (up - _UN)
    v = 13.0 * lstar * (vp - _VN)
    return np.stack([lstar, u, v], axis=-1)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luma of gamma-encoded RGB in [0, 1]."""
    rgb = np.asarray(rgb, dtype=float)
    return 0.2126 * rgb[..., 0] + 0.7152 * rgb[..., 1] + 0.0722 * rgb[..., 2]


def circular_mean_degrees(angles_deg: np.ndarray) -> float:
    """Circular mean of angles in degrees, result in [0, 360)."""
    rad = np.deg2rad(np.asarray(angles_deg, dtype=float))
    s, c = float(np.sin(rad).mean()), float(np.cos(rad).mean())
    if abs(s) < 1e-15 and abs(c) < 1e-15:
        return 0.0
    return float(np.rad2deg(np.arctan2(s, c)) % 360.0)


def pad_to_multiple(channel: np.ndarray, multiple: int) -> np.ndarray:
    """Edge-replicate pad a 2-D array so both dims divide `multiple`."""
    h, w = channel.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return channel
    return np.pad(channel, ((0, ph), (0, pw)), mode="edge")
