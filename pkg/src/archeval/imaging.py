"""Image decoding, the ingestion quality gate, and working-resolution normalization."""

from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .errors import ImageFormatError, ImageReadError

logger = logging.getLogger(__name__)

# Rec. 601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit raster, row-major, shape (height, width, channels)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageFormatError(f"bad raster shape {px.shape}")
        if px.shape[2] not in (1, 3):
            raise ImageFormatError(f"unsupported channel count {px.shape[2]}")
        px = np.ascontiguousarray(px, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        return isinstance(other, RasterImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Real-valued intensities in [0, 1], shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageFormatError(f"gray image must be 2-D, got shape {px.shape}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ImageFormatError("gray intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class PreprocessConfig:
    min_ingest_dim: int = 350
    working_width: int = 100
    working_height: int = 100
    denoise_sigma: float = 0.5
    gate_override: bool = False

    def __post_init__(self):
        if self.working_width < 16 or self.working_height < 16:
            raise ValueError("working dimensions must be >= 16")
        if self.denoise_sigma < 0:
            raise ValueError("denoise_sigma must be >= 0")
        if self.min_ingest_dim < 1:
            raise ValueError("min_ingest_dim must be >= 1")


@dataclass(frozen=True)
class GateDecision:
    accepted: bool
    reason: str
    warning: str | None = None

    def __bool__(self) -> bool:
        return self.accepted


def load_image(path: str | os.PathLike) -> RasterImage:
    """Decode a PNG or JPEG file into an 8-bit gray or RGB raster.

    Palette, alpha and 16-bit images are flattened to the nearest of the two
    supported layouts (alpha is composited onto white).
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc
    if not data:
        raise ImageFormatError(f"{path}: empty file")

    try:
        img = Image.open(io.BytesIO(data))
        if img.format not in ("PNG", "JPEG"):
            raise ImageFormatError(f"{path}: unsupported container {img.format}")
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: cannot decode image ({exc})") from exc

    if img.mode in ("RGBA", "LA", "PA") or (img.mode == "P" and "transparency" in img.info):
        rgba = img.convert("RGBA")
        background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        img = Image.alpha_composite(background, rgba).convert("RGB")
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64)
        scale = 65535.0 if arr.max() > 255 else 255.0
        return RasterImage(np.round(arr / scale * 255.0).astype(np.uint8))
    if img.mode == "L":
        return RasterImage(np.asarray(img))
    if img.mode == "1":
        return RasterImage(np.asarray(img.convert("L")))
    return RasterImage(np.asarray(img.convert("RGB")))


def quality_gate(img: RasterImage, cfg: PreprocessConfig = PreprocessConfig()) -> GateDecision:
    short = min(img.width, img.height)
    if short >= cfg.min_ingest_dim:
        return GateDecision(True, f"{img.width}x{img.height} meets minimum {cfg.min_ingest_dim}")
    side = "width" if img.width <= img.height else "height"
    reason = (f"{side} {short}px below minimum {cfg.min_ingest_dim}px "
              f"(image is {img.width}x{img.height})")
    if cfg.gate_override:
        return GateDecision(True, reason, warning=f"quality gate overridden: {reason}")
    return GateDecision(False, reason)


def to_grayscale(img: RasterImage) -> GrayImage:
    px = img.pixels.astype(np.float64)
    if img.channels == 3:
        r, g, b = LUMA_WEIGHTS
        lum = r * px[:, :, 0] + g * px[:, :, 1] + b * px[:, :, 2]
    elif img.channels == 1:
        lum = px[:, :, 0]
    else:  # pragma: no cover - RasterImage rejects this already
        raise ImageFormatError(f"unsupported channel count {img.channels}")
    return GrayImage(np.clip(lum / 255.0, 0.0, 1.0))


def _triangle_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-normalized (n_out, n_in) bilinear resampling matrix.

    When shrinking, the triangle kernel is widened by the scale factor so
    every source pixel contributes; at equal sizes the matrix is the identity.
    """
    scale = n_in / n_out
    stretch = max(scale, 1.0)
    centers = (np.arange(n_out) + 0.5) * scale
    src = np.arange(n_in) + 0.5
    w = 1.0 - np.abs(src[None, :] - centers[:, None]) / stretch
    w = np.clip(w, 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    return w


def resize_bilinear(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    h, w = pixels.shape
    wy = _triangle_weights(h, height)
    wx = _triangle_weights(w, width)
    return wy @ pixels @ wx.T


def preprocess(img: RasterImage, cfg: PreprocessConfig = PreprocessConfig()) -> GrayImage:
    """Grayscale, denoise, then resample to the working resolution."""
    gray = to_grayscale(img).pixels
    if cfg.denoise_sigma > 0:
        gray = gaussian_filter(gray, cfg.denoise_sigma, mode="nearest")
    out = resize_bilinear(gray, cfg.working_width, cfg.working_height)
    return GrayImage(np.clip(out, 0.0, 1.0))
