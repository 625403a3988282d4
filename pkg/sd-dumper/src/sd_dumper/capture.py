"""Accumulates per-token attention maps across layers during denoising.

Heads are expected to be averaged by the hook that feeds this buffer;
layers may arrive at different spatial resolutions. Finalizing a
timestep resizes every layer to the largest captured resolution and
averages, producing the single map per (timestep, token) that the dump
stores.
"""

from __future__ import annotations

import numpy as np


def _bilinear_resize(src: np.ndarray, h: int, w: int) -> np.ndarray:
    """Half-pixel-center bilinear resample of a 2-D array."""
    sh, sw = src.shape
    rows = np.clip((np.arange(h) + 0.5) * (sh / h) - 0.5, 0.0, sh - 1.0)
    cols = np.clip((np.arange(w) + 0.5) * (sw / w) - 0.5, 0.0, sw - 1.0)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, sh - 1)
    c1 = np.minimum(c0 + 1, sw - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = src[np.ix_(r0, c0)] + fc * (src[np.ix_(r0, c1)] - src[np.ix_(r0, c0)])
    bot = src[np.ix_(r1, c0)] + fc * (src[np.ix_(r1, c1)] - src[np.ix_(r1, c0)])
    return top + fr * (bot - top)


class AttentionCapture:
    """Per-timestep buffer of head-averaged, per-layer token maps."""

    def __init__(self, n_tokens: int):
        self.n_tokens = n_tokens
        self._layers: list[np.ndarray] = []
        self._finalized: dict[int, np.ndarray] = {}

    def add_layer(self, maps: np.ndarray) -> None:
        """One layer's maps for the current timestep: (n_tokens, h, w)."""
        maps = np.asarray(maps, dtype=np.float64)
        if maps.ndim != 3 or maps.shape[0] != self.n_tokens:
            raise ValueError(f"expected ({self.n_tokens}, h, w) maps, got {maps.shape}")
        self._layers.append(maps)

    def finalize_timestep(self, t: int) -> None:
        """Aggregate the buffered layers into one map set for timestep t."""
        if not self._layers:
            raise ValueError(f"no layers captured for timestep {t}")
        h = max(m.shape[1] for m in self._layers)
        w = max(m.shape[2] for m in self._layers)
        acc = np.zeros((self.n_tokens, h, w))
        for layer in self._layers:
            for k in range(self.n_tokens):
                m = layer[k]
                acc[k] += m if m.shape == (h, w) else _bilinear_resize(m, h, w)
        self._finalized[t] = acc / len(self._layers)
        self._layers = []

    def stacked(self, timesteps: list[int]) -> np.ndarray:
        """(n_timesteps, n_tokens, H, W) in the given timestep order."""
        missing = [t for t in timesteps if t not in self._finalized]
        if missing:
            raise ValueError(f"timesteps never captured: {missing}")
        return np.stack([self._finalized[t] for t in timesteps])
