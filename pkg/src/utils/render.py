"""
Netpbm rendering of 2D fields

Row 0 of a field array is the lowest y; images are written top row first,
so arrays are flipped vertically before encoding.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from matplotlib.colors import LinearSegmentedColormap

STYLES = ("gray-density", "signed-redblue", "overlay-potential")

# Blue for negative, red for positive; odd N puts 0 on the exact gray entry
SIGNED_MAP = LinearSegmentedColormap.from_list(
    "signed_redblue", [(0.0, 0.0, 1.0), (0.5, 0.5, 0.5), (1.0, 0.0, 0.0)], N=255
)
DENSITY_MAP = LinearSegmentedColormap.from_list(
    "density_heat", [(1.0, 1.0, 1.0), (1.0, 0.6, 0.1), (0.55, 0.0, 0.0)], N=256
)
NAN_COLOR = (0, 255, 0)
NAN_GRAY = 0
# Potential background spans this gray range under the data layer
BACKGROUND_RANGE = (0.55, 1.0)


@dataclass(frozen=True)
class RenderedImage:
    data: bytes
    width: int
    height: int
    style: str
    value_range: Tuple[float, float]
    nan_pixels: int

    @property
    def extension(self) -> str:
        return ".pgm" if self.data.startswith(b"P5") else ".ppm"


def _finite_range(array: np.ndarray) -> Tuple[float, float]:
    finite = array[np.isfinite(array)]
    if finite.size == 0:
        return (0.0, 0.0)
    return (float(finite.min()), float(finite.max()))


def _unit_scale(array: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi > lo:
        return np.clip((array - lo) / (hi - lo), 0.0, 1.0)
    return np.zeros_like(array)


def _netpbm(magic: bytes, pixels: np.ndarray) -> bytes:
    height, width = pixels.shape[:2]
    header = magic + f"\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def render_gray(array: np.ndarray) -> RenderedImage:
    """Min-max normalized graymap: minimum black, maximum white"""
    lo, hi = _finite_range(array)
    nan = ~np.isfinite(array)
    values = np.rint(_unit_scale(np.where(nan, lo, array), lo, hi) * 255.0).astype(np.uint8)
    values[nan] = NAN_GRAY
    return RenderedImage(
        _netpbm(b"P5", values[::-1]),
        array.shape[1],
        array.shape[0],
        "gray-density",
        (lo, hi),
        int(nan.sum()),
    )


def render_signed(array: np.ndarray) -> RenderedImage:
    """Diverging red/blue map, symmetric about zero"""
    lo, hi = _finite_range(array)
    scale = max(abs(lo), abs(hi))
    nan = ~np.isfinite(array)
    clean = np.where(nan, 0.0, array)
    u = 0.5 + 0.5 * clean / scale if scale > 0 else np.full(array.shape, 0.5)
    rgb = SIGNED_MAP(u, bytes=True)[..., :3]
    rgb[nan] = NAN_COLOR
    return RenderedImage(
        _netpbm(b"P6", rgb[::-1]),
        array.shape[1],
        array.shape[0],
        "signed-redblue",
        (lo, hi),
        int(nan.sum()),
    )


def render_overlay(array: np.ndarray, background: np.ndarray) -> RenderedImage:
    """Density colours multiplied onto a grayscale potential (high potential darker)"""
    if background.shape != array.shape:
        raise ValueError(
            f"Background shape {background.shape} does not match data shape {array.shape}"
        )
    lo, hi = _finite_range(array)
    nan = ~np.isfinite(array)
    data = DENSITY_MAP(_unit_scale(np.where(nan, lo, array), lo, hi))[..., :3]

    blo, bhi = _finite_range(background)
    shade = 1.0 - _unit_scale(np.nan_to_num(background, nan=blo), blo, bhi)
    gray = BACKGROUND_RANGE[0] + (BACKGROUND_RANGE[1] - BACKGROUND_RANGE[0]) * shade

    rgb = np.rint(data * gray[..., None] * 255.0).astype(np.uint8)
    rgb[nan] = NAN_COLOR
    return RenderedImage(
        _netpbm(b"P6", rgb[::-1]),
        array.shape[1],
        array.shape[0],
        "overlay-potential",
        (lo, hi),
        int(nan.sum()),
    )


def render(array, style: str, background: Optional[np.ndarray] = None) -> RenderedImage:
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 2 or 0 in array.shape:
        raise ValueError(f"Can only render non-empty 2D arrays, got shape {array.shape}")
    if style == "gray-density":
        return render_gray(array)
    if style == "signed-redblue":
        return render_signed(array)
    if style == "overlay-potential":
        if background is None:
            raise ValueError("overlay-potential needs a background potential")
        return render_overlay(array, np.asarray(background, dtype=np.float64))
    raise ValueError(f"Unknown render style '{style}', expected one of {STYLES}")
