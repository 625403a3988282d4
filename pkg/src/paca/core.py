"""Shared domain types and raster math used by every other module.

Conventions used everywhere: rasters are row-major with origin at the
top-left, coordinates refer to pixel centers, and the canonical engine
resolution is 512x512 (lower-resolution dumps are upsampled on ingest).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RasterRangeError, RasterShapeError

ENGINE_SIZE = 512


@dataclass(frozen=True)
class Raster2D:
    """A real-valued 2-D grid (attention activation, depth in meters, or a
    binary mask depending on use)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise RasterShapeError(f"raster must be 2-D, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_flat(cls, height: int, width: int, flat) -> "Raster2D":
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if height * width != flat.size:
            raise RasterShapeError(
                f"{height}x{width} header but {flat.size} values"
            )
        return cls(flat.reshape(height, width))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class PixelPoint:
    """A single pixel location with an optional weight."""

    row: int
    col: int
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class RgbdFrame:
    """512x512 color image plus metric depth of the real scene."""

    color: np.ndarray          # uint8, (H, W, 3)
    depth: Raster2D            # meters
    valid_mask: Raster2D       # 1 = measured depth

    def __post_init__(self):
        color = np.asarray(self.color, dtype=np.uint8)
        object.__setattr__(self, "color", color)
        h, w = color.shape[:2]
        if color.ndim != 3 or color.shape[2] != 3:
            raise RasterShapeError(f"color must be HxWx3, got {color.shape}")
        if self.depth.shape != (h, w) or self.valid_mask.shape != (h, w):
            raise RasterShapeError("color, depth and valid_mask must share dimensions")
        valid = self.valid_mask.values >= 0.5
        if np.any(self.depth.values[valid] < 0):
            raise ValueError("depth must be >= 0 where valid")


@dataclass(frozen=True)
class ObjectWord:
    """One prompt word with the dump-table indices of its sub-tokens."""

    word: str
    token_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "token_indices", tuple(int(i) for i in self.token_indices))


@dataclass(frozen=True)
class PromptManifest:
    """Generation settings and token bookkeeping paired with a dump."""

    prompt_text: str
    seed: int
    cfg_scale: float
    total_steps: int
    object_words: tuple[ObjectWord, ...]
    recorded_timesteps: tuple[int, ...]
    mode: str  # "goal" | "real"

    def __post_init__(self):
        object.__setattr__(self, "object_words", tuple(self.object_words))
        object.__setattr__(
            self, "recorded_timesteps", tuple(int(t) for t in self.recorded_timesteps)
        )
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.mode not in ("goal", "real"):
            raise ValueError(f"mode must be 'goal' or 'real', got {self.mode!r}")
        ts = self.recorded_timesteps
        if any(t2 >= t1 for t1, t2 in zip(ts, ts[1:])):
            raise ValueError(f"recorded_timesteps must be strictly decreasing: {ts}")
        if ts and (ts[-1] < 1 or ts[0] > self.total_steps):
            raise ValueError(
                f"recorded_timesteps must lie in [1, {self.total_steps}]: {ts}"
            )

    def to_dict(self) -> dict:
        return {
            "prompt_text": self.prompt_text,
            "seed": self.seed,
            "cfg_scale": self.cfg_scale,
            "total_steps": self.total_steps,
            "object_words": [
                {"word": ow.word, "token_indices": list(ow.token_indices)}
                for ow in self.object_words
            ],
            "recorded_timesteps": list(self.recorded_timesteps),
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptManifest":
        return cls(
            prompt_text=d["prompt_text"],
            seed=int(d["seed"]),
            cfg_scale=float(d["cfg_scale"]),
            total_steps=int(d["total_steps"]),
            object_words=tuple(
                ObjectWord(ow["word"], tuple(ow["token_indices"]))
                for ow in d["object_words"]
            ),
            recorded_timesteps=tuple(d["recorded_timesteps"]),
            mode=d["mode"],
        )


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = (theta + math.pi) % math.tau - math.pi
    if w <= -math.pi:
        w += math.tau
    return w


@dataclass(frozen=True)
class RigidTransform:
    """Recovered pose change (dx, dy, dz, theta).

    dx/dy are x (column) and y (row) displacements; theta is the in-plane
    rotation applied about the origin: p' = R(theta) p + (dx, dy) with
    p = (x, y) = (col, row). dz is 0 in 3-DoF mode.
    """

    dx: float
    dy: float
    dz: float = 0.0
    theta: float = 0.0
    frame: str = "pixel"  # "pixel" | "metric"

    def __post_init__(self):
        if self.frame not in ("pixel", "metric"):
            raise ValueError(f"frame must be 'pixel' or 'metric', got {self.frame!r}")
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 2) array of (row, col) points."""
        pts = np.asarray(points, dtype=np.float64)
        x, y = pts[:, 1], pts[:, 0]
        c, s = math.cos(self.theta), math.sin(self.theta)
        xp = c * x - s * y + self.dx
        yp = s * x + c * y + self.dy
        return np.stack([yp, xp], axis=1)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics used for pixel-to-meter conversion in 6-DoF mode."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


def validate_raster(r: Raster2D, lo: float, hi: float) -> Raster2D:
    """Return ``r`` unchanged iff every value is finite and in [lo, hi].

    Raises RasterRangeError with the first violating flat index.
    """
    v = r.values.ravel()
    bad = ~(np.isfinite(v) & (v >= lo) & (v <= hi))
    if bad.any():
        idx = int(np.argmax(bad))
        raise RasterRangeError(idx, float(v[idx]))
    return r


def bilinear_resize(r: Raster2D, h: int, w: int) -> Raster2D:
    """Resample to h x w, sampling at aligned pixel centers.

    Uses the half-pixel-center convention with edge clamping; constant
    rasters map to constant rasters exactly.
    """
    if h < 1 or w < 1:
        raise ValueError(f"target size must be >= 1, got {h}x{w}")
    src = r.values
    sh, sw = src.shape
    rows = np.clip((np.arange(h) + 0.5) * (sh / h) - 0.5, 0.0, sh - 1.0)
    cols = np.clip((np.arange(w) + 0.5) * (sw / w) - 0.5, 0.0, sw - 1.0)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, sh - 1)
    c1 = np.minimum(c0 + 1, sw - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    # lerp written as a + f*(b - a) so equal endpoints reproduce exactly
    top = src[np.ix_(r0, c0)] + fc * (src[np.ix_(r0, c1)] - src[np.ix_(r0, c0)])
    bot = src[np.ix_(r1, c0)] + fc * (src[np.ix_(r1, c1)] - src[np.ix_(r1, c0)])
    out = top + fr * (bot - top)
    return Raster2D(out)


def minmax_normalize(r: Raster2D) -> Raster2D:
    """Rescale to [0, 1]; a constant raster normalizes to all zeros."""
    v = r.values
    if v.size < 1:
        raise RasterShapeError("cannot normalize an empty raster")
    mn = float(v.min())
    mx = float(v.max())
    if mx == mn:
        return Raster2D(np.zeros_like(v))
    return Raster2D((v - mn) / (mx - mn))
