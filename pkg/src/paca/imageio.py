"""PNG helpers: color frames, binary control rasters, 16-bit depth."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .core import Raster2D
from .errors import RasterShapeError


def load_color(path) -> np.ndarray:
    """8-bit RGB image as (H, W, 3) uint8."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_color(path, color: np.ndarray) -> None:
    arr = np.asarray(color, dtype=np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_binary(path, raster: Raster2D) -> None:
    """Binary raster as an 8-bit single-channel PNG (0 or 255)."""
    arr = np.where(raster.values >= 0.5, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_depth(path) -> tuple[Raster2D, Raster2D]:
    """16-bit single-channel PNG in millimeters; 0 marks invalid pixels.

    Returns (depth in meters, valid mask).
    """
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise RasterShapeError(f"depth PNG must be single-channel, got shape {arr.shape}")
    mm = arr.astype(np.float64)
    return Raster2D(mm / 1000.0), Raster2D((mm > 0).astype(np.float64))


def save_depth(path, depth_m: Raster2D, valid: Raster2D | None = None) -> None:
    """Write meters as a 16-bit millimeter PNG; invalid pixels become 0."""
    mm = np.rint(depth_m.values * 1000.0).astype(np.int64)
    mm = np.clip(mm, 0, 65535)
    if valid is not None:
        mm = np.where(valid.values >= 0.5, mm, 0)
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")

