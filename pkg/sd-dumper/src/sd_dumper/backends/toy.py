"""Deterministic stand-in for a latent diffusion model.

Exercises the full dump machinery without model weights: a word's
attention is a Gaussian blob that starts broad and tightens as
denoising approaches t = 1, mirroring how real cross-attention
concentrates on feature-rich parts late in the trajectory. Goal-mode
blob positions derive from the seed (one vertical strip per word);
reconstruction-mode positions are re-estimated every step from the
clean-latent estimate, so maps follow the input image's content.

Continuous latent coordinates put cell k's center at k + 0.5, matching
the engine's half-pixel raster convention. Blobs are elliptical with a
word-dependent aspect so each object's principal axis is observable.
"""

from __future__ import annotations

import math
import re
import zlib

import numpy as np

from .. import schedule

LATENT = 16          # latent grid is LATENT x LATENT
SCALE = 32           # image pixels per latent cell (512 / 16)
SUBTOKEN_SPLIT = 8   # words this long tokenize into two sub-tokens
MODEL_ID = "toy-diffusion-v1"

_BACKGROUND = 40
_BLOB_RADIUS = 30.0


def tokenize(prompt: str) -> tuple[list[str], dict[str, tuple[int, ...]]]:
    """Lowercased word tokens; long words split into two sub-tokens."""
    words = [w for w in re.split(r"[^0-9a-zA-Z]+", prompt.lower()) if w]
    tokens: list[str] = []
    indices: dict[str, tuple[int, ...]] = {}
    for word in words:
        start = len(tokens)
        if len(word) >= SUBTOKEN_SPLIT:
            tokens.extend([word[:4], "##" + word[4:]])
        else:
            tokens.append(word)
        if word not in indices:  # repeated words keep their first span
            indices[word] = tuple(range(start, len(tokens)))
    return tokens, indices


def _aspect(word: str) -> float:
    """Stable per-word ellipse aspect in [1.3, 1.9]."""
    return 1.3 + 0.6 * ((zlib.crc32(word.encode()) % 1000) / 999.0)


def _ellipse_blob(size: int, cy: float, cx: float, sy: float, sx: float) -> np.ndarray:
    """Gaussian at continuous coords (cell k center = k + 0.5)."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    return np.exp(-((ys - cy) ** 2 / (2.0 * sy**2) + (xs - cx) ** 2 / (2.0 * sx**2)))


class ToySession:
    """One dump job's worth of deterministic model state."""

    def __init__(self, backend, tokens, word_indices, seed, mode, bars, cfg_scale,
                 control=None):
        self.backend = backend
        self.control = control
        self.tokens = tokens
        self.word_indices = word_indices
        self.mode = mode
        self.bars = bars
        self.cfg_scale = cfg_scale
        self._rng = np.random.default_rng(seed)
        self._goal_centers = None
        if mode == "goal":
            self._goal_centers = self._seeded_centers()

    # one vertical strip per word; centers snap to latent cell centers so
    # the rendered scene re-encodes to the same positions
    def _seeded_centers(self) -> dict[str, tuple[float, float]]:
        words = list(self.word_indices)
        strip = LATENT / max(1, len(words))
        centers = {}
        for i, word in enumerate(words):
            row = math.floor(self._rng.uniform(LATENT * 0.3, LATENT * 0.7)) + 0.5
            lo = i * strip
            col = math.floor(self._rng.uniform(lo + strip * 0.25, lo + strip * 0.75))
            centers[word] = (row, min(col, LATENT - 1) + 0.5)
        return centers

    def _content_centers(self, z_clean: np.ndarray) -> dict[str, tuple[float, float]]:
        """Blob positions from the clean-latent estimate: the brightness
        centroid of each word's strip."""
        g = (np.clip(z_clean, -1.0, 1.0) + 1.0) / 2.0
        words = list(self.word_indices)
        strip = LATENT / max(1, len(words))
        ys, xs = np.mgrid[0:LATENT, 0:LATENT].astype(np.float64) + 0.5
        centers = {}
        for i, word in enumerate(words):
            lo, hi = int(round(i * strip)), int(round((i + 1) * strip))
            hi = max(hi, lo + 1)
            band = g[:, lo:hi]
            w = (band - band.min()) ** 2
            total = w.sum()
            if total <= 0:
                centers[word] = (LATENT / 2, (lo + hi) / 2)
            else:
                cy = float((w * ys[:, lo:hi]).sum() / total)
                cx = float((w * xs[:, lo:hi]).sum() / total)
                centers[word] = (cy, cx)
        return centers

    def init_latent(self) -> np.ndarray:
        return self._rng.normal(size=(LATENT, LATENT))

    def predict(self, z: np.ndarray, t: int) -> np.ndarray:
        # latent-proportional noise; deterministic, so reconstruction with
        # cfg = 0 retraces the inversion almost exactly
        return 0.05 * z

    def attention_layers(self, z: np.ndarray, eps: np.ndarray, t: int) -> list[np.ndarray]:
        """Head-averaged per-token maps at two resolutions for timestep t."""
        T = len(self.bars)
        if self._goal_centers is not None:
            centers = self._goal_centers
        else:
            centers = self._content_centers(schedule.clean_estimate(z, t, eps, self.bars))
        # broad early (t ~ T), concentrated late (t ~ 1)
        sigma = LATENT * (0.05 + 0.15 * (t / T))
        layers = []
        for size in (LATENT, LATENT // 2):
            maps = np.zeros((len(self.tokens), size, size))
            f = size / LATENT
            for word, idx in self.word_indices.items():
                a = _aspect(word)
                cy, cx = centers[word]
                for j, k in enumerate(idx):
                    maps[k] = _ellipse_blob(
                        size,
                        (cy + 0.3 * j) * f,
                        (cx + 0.3 * j) * f,
                        sigma * f / a,
                        sigma * f * a,
                    )
            layers.append(maps)
        return layers

    def render(self) -> np.ndarray:
        """Scene image: one bright ellipse per word at its blob center."""
        img = np.full((LATENT * SCALE, LATENT * SCALE, 3), _BACKGROUND, dtype=np.uint8)
        centers = self._goal_centers or {}
        ys, xs = np.mgrid[0 : LATENT * SCALE, 0 : LATENT * SCALE].astype(np.float64) + 0.5
        for i, (word, (cy, cx)) in enumerate(centers.items()):
            a = _aspect(word)
            py, px = cy * SCALE, cx * SCALE
            mask = ((ys - py) / (_BLOB_RADIUS / a)) ** 2 + (
                (xs - px) / (_BLOB_RADIUS * a)
            ) ** 2 <= 1.0
            value = 200 + (i * 11) % 56
            img[mask] = value
        return img


class ToyDiffusionBackend:
    latent_size = LATENT
    model_id = MODEL_ID

    def tokenize(self, prompt: str):
        return tokenize(prompt)

    def session(self, tokens, word_indices, seed, mode, bars, cfg_scale,
                control=None) -> ToySession:
        return ToySession(self, tokens, word_indices, seed, mode, bars, cfg_scale, control)

    def encode(self, image: np.ndarray) -> np.ndarray:
        """Block-mean grayscale to the latent grid, remapped to [-1, 1]."""
        img = np.asarray(image, dtype=np.float64)
        gray = img.mean(axis=2) / 255.0
        h, w = gray.shape
        g = gray.reshape(LATENT, h // LATENT, LATENT, w // LATENT).mean(axis=(1, 3))
        return 2.0 * g - 1.0

    def decode(self, z: np.ndarray) -> np.ndarray:
        g = np.clip((z + 1.0) / 2.0, 0.0, 1.0)
        img = np.repeat(np.repeat(g, SCALE, axis=0), SCALE, axis=1)
        return np.repeat((img * 255.0).astype(np.uint8)[:, :, None], 3, axis=2)
