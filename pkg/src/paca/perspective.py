"""Dominant-line extraction and control-raster generation.

Lines detected in the real image are rasterized as thin white strokes on
black; that raster conditions goal generation so the generated viewpoint
matches the camera's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Raster2D
from .errors import RasterShapeError

_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class HoughLine:
    """One detected line in (rho, theta) normal form."""

    rho: float          # signed distance from origin, pixels
    theta: float        # radians in [0, pi)
    votes: int

    def __post_init__(self):
        if not (0.0 <= self.theta < math.pi):
            raise ValueError(f"theta must be in [0, pi), got {self.theta}")


@dataclass(frozen=True)
class HoughParams:
    rho_resolution: float = 1.0
    theta_resolution: float = math.pi / 180.0
    vote_threshold: int = 120
    max_lines: int = 10
    canny_low: float = 50.0
    canny_high: float = 150.0

    def __post_init__(self):
        if self.rho_resolution <= 0 or self.theta_resolution <= 0:
            raise ValueError("resolutions must be > 0")
        if not (self.canny_low < self.canny_high):
            raise ValueError("canny_low must be < canny_high")


def _grayscale(color: np.ndarray) -> np.ndarray:
    c = np.asarray(color, dtype=np.float64)
    if c.ndim == 2:
        return c
    if c.ndim != 3 or c.shape[2] != 3:
        raise RasterShapeError(f"expected HxWx3 color image, got {c.shape}")
    return _LUMA[0] * c[..., 0] + _LUMA[1] * c[..., 1] + _LUMA[2] * c[..., 2]


def _sobel(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(gray, 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy

# Quantized gradient directions and their forward pixel offsets (dr, dc).
_NMS_OFFSETS = [(0, 1), (1, 1), (1, 0), (1, -1)]


def _non_max_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    angle = np.mod(np.arctan2(gy, gx), math.pi)
    sector = np.floor((angle + math.pi / 8) / (math.pi / 4)).astype(int) % 4
    padded = np.pad(mag, 1, mode="constant")
    keep = np.zeros_like(mag, dtype=bool)
    for s, (dr, dc) in enumerate(_NMS_OFFSETS):
        fwd = padded[1 + dr : padded.shape[0] - 1 + dr, 1 + dc : padded.shape[1] - 1 + dc]
        bwd = padded[1 - dr : padded.shape[0] - 1 - dr, 1 - dc : padded.shape[1] - 1 - dc]
        # >= forward but strictly > backward keeps exactly one of a tied pair
        keep |= (sector == s) & (mag > 0) & (mag >= fwd) & (mag > bwd)
    return keep


def edge_map(color: np.ndarray, low: float = 50.0, high: float = 150.0) -> Raster2D:
    """Canny-style binary edges: Sobel gradients, non-maximum suppression
    along the gradient, then double-threshold hysteresis."""
    gray = _grayscale(color)
    gx, gy = _sobel(gray)
    mag = np.hypot(gx, gy)
    kept = _non_max_suppress(mag, gx, gy)
    strong = kept & (mag >= high)
    weak = kept & (mag >= low)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return Raster2D(np.zeros_like(gray))
    strong_labels = np.unique(labels[strong])
    strong_labels = strong_labels[strong_labels > 0]
    edges = np.isin(labels, strong_labels)
    return Raster2D(edges.astype(np.float64))


def hough_lines(edges: Raster2D, params: HoughParams = HoughParams()) -> list[HoughLine]:
    """Accumulator vote over rho = x cos(theta) + y sin(theta).

    Returns up to max_lines peaks at or above vote_threshold, sorted by
    votes descending, after 3x3 non-maximum suppression in the
    accumulator (near-duplicate bins would otherwise flood the output).
    """
    rows, cols = np.nonzero(edges.values >= 0.5)
    h, w = edges.shape
    diag = math.ceil(math.hypot(h, w))
    thetas = np.arange(0.0, math.pi, params.theta_resolution)
    n_rho = int(round(2 * diag / params.rho_resolution)) + 1
    acc = np.zeros((n_rho, len(thetas)), dtype=np.int64)
    if rows.size:
        x = cols.astype(np.float64)
        y = rows.astype(np.float64)
        for j, th in enumerate(thetas):
            rho = x * math.cos(th) + y * math.sin(th)
            idx = np.rint((rho + diag) / params.rho_resolution).astype(np.intp)
            acc[:, j] += np.bincount(idx, minlength=n_rho)

    local_max = acc == ndimage.maximum_filter(acc, size=3, mode="constant", cval=0)
    cand_r, cand_t = np.nonzero((acc >= params.vote_threshold) & local_max)
    order = sorted(
        range(cand_r.size), key=lambda i: (-acc[cand_r[i], cand_t[i]], cand_r[i], cand_t[i])
    )
    lines: list[HoughLine] = []
    accepted: list[tuple[int, int]] = []
    for i in order:
        if len(lines) >= params.max_lines:
            break
        ri, ti = int(cand_r[i]), int(cand_t[i])
        if any(abs(ri - ar) <= 1 and abs(ti - at) <= 1 for ar, at in accepted):
            continue
        accepted.append((ri, ti))
        lines.append(
            HoughLine(
                rho=ri * params.rho_resolution - diag,
                theta=float(thetas[ti]),
                votes=int(acc[ri, ti]),
            )
        )
    return lines


def rasterize_control(
    lines: list[HoughLine], size: tuple[int, int] = (512, 512), width: float = 2.0
) -> Raster2D:
    """Draw each line across the full raster as a white stroke on black.

    A pixel is set when its center lies within width/2 of the continuous
    line; overlapping strokes union idempotently.
    """
    h, w = size
    out = np.zeros((h, w), dtype=bool)
    if lines:
        ys, xs = np.mgrid[0:h, 0:w]
        for line in lines:
            dist = np.abs(
                xs * math.cos(line.theta) + ys * math.sin(line.theta) - line.rho
            )
            out |= dist <= width / 2.0
    return Raster2D(out.astype(np.float64))
