"""Deterministic DDIM stepping used by the dump loops."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np


def alpha_bars(steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> np.ndarray:
    """Cumulative alpha products for a linear beta ramp over ``steps``."""
    betas = np.linspace(beta_start, beta_end, steps)
    return np.cumprod(1.0 - betas)


def _ab(bars: np.ndarray, t: int) -> float:
    return 1.0 if t == 0 else float(bars[t - 1])


def clean_estimate(z: np.ndarray, t: int, eps: np.ndarray, bars: np.ndarray) -> np.ndarray:
    """Clean-latent estimate from a noisy latent and a noise prediction."""
    ab = _ab(bars, t)
    return (z - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)


def denoise_step(z: np.ndarray, t: int, eps: np.ndarray, bars: np.ndarray) -> np.ndarray:
    """One deterministic step t -> t-1."""
    ab_prev = _ab(bars, t - 1)
    clean = clean_estimate(z, t, eps, bars)
    return math.sqrt(ab_prev) * clean + math.sqrt(1.0 - ab_prev) * eps


def invert_step(z: np.ndarray, t: int, eps: np.ndarray, bars: np.ndarray) -> np.ndarray:
    """One inversion step t-1 -> t (algebraic inverse of denoise_step)."""
    ab, ab_prev = _ab(bars, t), _ab(bars, t - 1)
    return (
        math.sqrt(ab) * (z - math.sqrt(1.0 - ab_prev) * eps) / math.sqrt(ab_prev)
        + math.sqrt(1.0 - ab) * eps
    )


def invert(
    z0: np.ndarray,
    bars: np.ndarray,
    predict: Callable[[np.ndarray, int], np.ndarray],
) -> np.ndarray:
    """Map a clean latent to its noisy counterpart through t = 1..T."""
    z = np.asarray(z0, dtype=np.float64)
    for t in range(1, len(bars) + 1):
        z = invert_step(z, t, predict(z, t), bars)
    return z
