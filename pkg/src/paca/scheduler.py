"""Deterministic DDIM denoising, inversion, and clean-latent estimation.

Operates on toy-scale flat latents so the step math can be verified
exactly; the noise predictor is pluggable and never sees text (prompt
conditioning is a property of concrete predictors, not of the schedule).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import ScheduleRangeError, TimestepError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep beta/alpha tables, indexed t = 1..T.

    ``alpha_bars[t-1]`` is the running product of ``alphas`` up to t;
    the product at t = 0 is defined as 1.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    T: int

    def alpha_bar(self, t: int) -> float:
        if t < 0 or t > self.T:
            raise TimestepError(f"timestep {t} outside [0, {self.T}]")
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


@dataclass(frozen=True)
class Latent:
    """A flat latent vector tagged with its diffusion timestep."""

    values: np.ndarray
    timestep: int

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        arr = np.ascontiguousarray(arr).ravel()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


class NoisePredictor(Protocol):
    """Deterministic noise estimate for a latent at a timestep."""

    def predict(self, z: Latent, t: int) -> np.ndarray: ...


class ConstantPredictor:
    """Predicts the same constant noise vector regardless of input."""

    def __init__(self, c: float):
        self.c = float(c)

    def predict(self, z: Latent, t: int) -> np.ndarray:
        return np.full_like(z.values, self.c)


class ScaledLatentPredictor:
    """Predicts noise proportional to the current latent: eps = k * z."""

    def __init__(self, k: float):
        self.k = float(k)

    def predict(self, z: Latent, t: int) -> np.ndarray:
        return self.k * z.values


def make_schedule(betas: Sequence[float]) -> NoiseSchedule:
    """Build alpha and cumulative-product tables from per-step betas."""
    b = np.asarray(list(betas), dtype=np.float64)
    for i, beta in enumerate(b):
        if not (0.0 <= beta < 1.0):
            raise ScheduleRangeError(f"beta[{i}] = {beta} outside [0, 1)")
    alphas = 1.0 - b
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(betas=b, alphas=alphas, alpha_bars=alpha_bars, T=len(b))


def estimate_clean(z: Latent, t: int, eps: np.ndarray, sched: NoiseSchedule) -> Latent:
    """Estimate the clean latent from a noisy one and a noise prediction."""
    if t < 1 or t > sched.T:
        raise TimestepError(f"timestep {t} outside [1, {sched.T}]")
    ab = sched.alpha_bar(t)
    eps = np.asarray(eps, dtype=np.float64)
    clean = (z.values - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)
    return Latent(clean, 0)


def ddim_denoise_step(z: Latent, eps: np.ndarray, sched: NoiseSchedule) -> Latent:
    """One deterministic denoise step t -> t-1."""
    t = z.timestep
    if t < 1 or t > sched.T:
        raise TimestepError(f"cannot denoise from timestep {t}")
    eps = np.asarray(eps, dtype=np.float64)
    clean = estimate_clean(z, t, eps, sched).values
    ab_prev = sched.alpha_bar(t - 1)
    nxt = math.sqrt(ab_prev) * clean + math.sqrt(1.0 - ab_prev) * eps
    return Latent(nxt, t - 1)


def ddim_invert_step(z: Latent, t: int, eps: np.ndarray, sched: NoiseSchedule) -> Latent:
    """One inversion step t-1 -> t; exact algebraic inverse of
    ddim_denoise_step for identical eps."""
    if t < 1 or t > sched.T:
        raise TimestepError(f"timestep {t} outside [1, {sched.T}]")
    if z.timestep != t - 1:
        raise TimestepError(f"latent is at timestep {z.timestep}, expected {t - 1}")
    eps = np.asarray(eps, dtype=np.float64)
    ab = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t - 1)
    inverted = (
        math.sqrt(ab) * (z.values - math.sqrt(1.0 - ab_prev) * eps) / math.sqrt(ab_prev)
        + math.sqrt(1.0 - ab) * eps
    )
    return Latent(inverted, t)


def invert_trajectory(
    z0: Latent, pred: NoisePredictor, sched: NoiseSchedule
) -> list[Latent]:
    """Invert a clean latent through t = 1..T; returns [z_1, ..., z_T].

    The noise estimate for the step into t is evaluated at the current
    latent: eps = pred(z_{t-1}, t). Round trips with latent-dependent
    predictors are therefore approximate, improving with step count.
    """
    if z0.timestep != 0:
        raise TimestepError(f"inversion starts at timestep 0, got {z0.timestep}")
    traj = []
    z = z0
    for t in range(1, sched.T + 1):
        eps = pred.predict(z, t)
        z = ddim_invert_step(z, t, eps, sched)
        traj.append(z)
    return traj


def reconstruct_trajectory(
    zT: Latent,
    pred: NoisePredictor,
    sched: NoiseSchedule,
    tap: Callable[[int, Latent, np.ndarray], None] | None = None,
) -> Latent:
    """Denoise from z_T back to z_0; ``tap`` observes (t, z_t, eps) per step."""
    if zT.timestep != sched.T:
        raise TimestepError(f"reconstruction starts at timestep {sched.T}, got {zT.timestep}")
    z = zT
    for t in range(sched.T, 0, -1):
        eps = pred.predict(z, t)
        if tap is not None:
            tap(t, z, eps)
        z = ddim_denoise_step(z, eps, sched)
    return z
