"""Cross-attention maps and their aggregation into object representations.

A pixel-to-token attention map is thresholded at two denoising stages:
a mid-trajectory map captures the object's region and a late map its
feature-rich parts. Their Heaviside sum gives a {0,1,2}-valued raster
per object word; value-2 pixels are where both tests pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import (
    ENGINE_SIZE,
    PixelPoint,
    PromptManifest,
    Raster2D,
    bilinear_resize,
    minmax_normalize,
    validate_raster,
)
from .errors import (
    DimensionError,
    EmptyInputError,
    EmptyRepresentationError,
    ShapeError,
)

DEFAULT_TAU1 = 0.3
DEFAULT_TAU2 = 0.9

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class AttentionInputs:
    """Flattened spatial queries against encoded prompt keys/values."""

    q: np.ndarray  # (N_pix, d)
    k: np.ndarray  # (N_tok, d)
    v: np.ndarray  # (N_tok, d_v)
    d: int

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        k = np.asarray(self.k, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)
        if self.d < 1:
            raise DimensionError(f"key dimension must be >= 1, got {self.d}")
        if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
            raise DimensionError("Q, K, V must be 2-D matrices")
        if q.shape[1] != self.d or k.shape[1] != self.d:
            raise DimensionError(
                f"Q/K column counts ({q.shape[1]}, {k.shape[1]}) must equal d = {self.d}"
            )
        if k.shape[0] != v.shape[0]:
            raise DimensionError("K and V must have one row per token")


def cross_attention_map(inp: AttentionInputs) -> np.ndarray:
    """Softmax(Q K^T / sqrt(d)); each row is a distribution over tokens."""
    logits = inp.q @ inp.k.T / math.sqrt(inp.d)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def apply_attention(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Plain matrix product M V."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 2 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"cannot multiply {m.shape} by {v.shape}")
    return m @ v


def token_map(m: np.ndarray, token_indices, shape: tuple[int, int]) -> Raster2D:
    """Mean of the selected token columns, reshaped row-major to h x w.

    Multi-sub-token words use the per-pixel mean over their columns.
    """
    m = np.asarray(m, dtype=np.float64)
    indices = list(token_indices)
    for i in indices:
        if not (0 <= i < m.shape[1]):
            raise IndexError(f"token index {i} out of range for {m.shape[1]} tokens")
    h, w = shape
    col = m[:, indices].mean(axis=1)
    return Raster2D.from_flat(h, w, col)


def aggregate_layers(
    per_layer_maps: list[Raster2D], target: tuple[int, int] = (ENGINE_SIZE, ENGINE_SIZE)
) -> Raster2D:
    """Resize each layer map to the target, average, then min-max normalize."""
    if not per_layer_maps:
        raise EmptyInputError("no maps to aggregate")
    h, w = target
    acc = np.zeros((h, w), dtype=np.float64)
    for m in per_layer_maps:
        acc += bilinear_resize(m, h, w).values
    return minmax_normalize(Raster2D(acc / len(per_layer_maps)))


def step_threshold(r: Raster2D, tau: float) -> Raster2D:
    """Heaviside step: 1 where value >= tau, else 0 (inclusive boundary)."""
    validate_raster(r, 0.0, 1.0)
    return Raster2D((r.values >= tau).astype(np.float64))


@dataclass(frozen=True)
class Representation:
    """Joint {0,1,2}-valued map for one object word."""

    word: str
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ShapeError(f"representation must be 2-D, got {arr.shape}")
        arr = np.ascontiguousarray(arr.astype(np.int16))
        if arr.min(initial=0) < 0:
            raise ValueError("representation values must be non-negative")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def support(self) -> np.ndarray:
        return self.values >= 1

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.support))


def build_representation(
    m_mid: Raster2D,
    m_final: Raster2D,
    tau1: float = DEFAULT_TAU1,
    tau2: float = DEFAULT_TAU2,
    word: str = "",
) -> Representation:
    """Pixelwise sum of the two thresholded maps; values in {0, 1, 2}."""
    if m_mid.shape != m_final.shape:
        raise ShapeError(f"map shapes differ: {m_mid.shape} vs {m_final.shape}")
    b1 = step_threshold(m_mid, tau1).values
    b2 = step_threshold(m_final, tau2).values
    return Representation(word, (b1 + b2).astype(np.int16))


def split_instances(rep: Representation, min_area: int) -> list[Representation]:
    """8-connected components of the support, one Representation each.

    Components smaller than min_area are dropped. Ordered by descending
    area; ties broken by top-left (row-major scan) order.
    """
    labels, n = ndimage.label(rep.support, structure=_EIGHT_CONNECTED)
    instances = []
    flat = labels.ravel()
    for lab in range(1, n + 1):
        mask = labels == lab
        area = int(np.count_nonzero(mask))
        if area < min_area:
            continue
        first = int(np.argmax(flat == lab))
        values = np.where(mask, rep.values, 0)
        instances.append((area, first, Representation(rep.word, values)))
    instances.sort(key=lambda t: (-t[0], t[1]))
    return [r for _, _, r in instances]


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def grasp_point(rep: Representation) -> PixelPoint:
    """Geometric center of the representation's support, rounded per axis."""
    rows, cols = np.nonzero(rep.support)
    if rows.size == 0:
        raise EmptyRepresentationError(f"no support pixels for {rep.word!r}")
    return PixelPoint(
        row=_round_half_away(float(rows.mean())),
        col=_round_half_away(float(cols.mean())),
    )


def select_recorded_timestep(recorded, target: float) -> int:
    """Recorded timestep closest to the target; ties toward the larger
    (noisier) timestep."""
    if not recorded:
        raise ValueError("no recorded timesteps")
    return min(recorded, key=lambda t: (abs(t - target), -t))


class AttentionStack:
    """All per-token, per-timestep attention rasters for one image.

    Raw dump-resolution maps (already validated to [0, 1]) are kept
    internally; access resizes to the engine canon and normalizes.
    """

    def __init__(
        self,
        manifest: PromptManifest,
        raw_maps: dict[int, list[Raster2D]],
        tokens: tuple[str, ...] = (),
    ):
        counts = {len(maps) for maps in raw_maps.values()}
        if len(counts) > 1:
            raise ShapeError(f"token counts differ across timesteps: {sorted(counts)}")
        for t in manifest.recorded_timesteps:
            if t not in raw_maps:
                raise ShapeError(f"recorded timestep {t} missing from maps")
        self.manifest = manifest
        self.tokens = tuple(tokens)
        self._raw = raw_maps

    def raw_map(self, timestep: int, token_index: int) -> Raster2D:
        """Dump-resolution map as stored, for re-serialization."""
        return self._raw[timestep][token_index]

    def map(self, timestep: int, token_index: int) -> Raster2D:
        """Engine-canon (512x512, min-max-normalized) map for one token."""
        raw = self._raw[timestep][token_index]
        return minmax_normalize(bilinear_resize(raw, ENGINE_SIZE, ENGINE_SIZE))

    def word_map(self, timestep: int, word: str) -> Raster2D:
        """Aggregated map for an object word (mean over sub-tokens)."""
        for ow in self.manifest.object_words:
            if ow.word == word:
                maps = [self.map(timestep, i) for i in ow.token_indices]
                return aggregate_layers(maps)
        raise KeyError(f"word {word!r} not in manifest")

    def mid_timestep(self) -> int:
        return select_recorded_timestep(
            self.manifest.recorded_timesteps, self.manifest.total_steps / 2
        )

    def final_timestep(self) -> int:
        return select_recorded_timestep(self.manifest.recorded_timesteps, 1)

    def representation(
        self, word: str, tau1: float = DEFAULT_TAU1, tau2: float = DEFAULT_TAU2
    ) -> Representation:
        """Joint representation from the mid- and final-stage word maps."""
        m_mid = self.word_map(self.mid_timestep(), word)
        m_final = self.word_map(self.final_timestep(), word)
        return build_representation(m_mid, m_final, tau1, tau2, word=word)

    @property
    def words(self) -> list[str]:
        return [ow.word for ow in self.manifest.object_words]
