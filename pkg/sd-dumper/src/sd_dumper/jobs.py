"""Dump jobs: goal generation and real-image inversion/reconstruction.

Both walk the denoising trajectory T -> 1 with the backend's noise
predictor, capturing per-token cross-attention at every recorded step,
and write the engine's dump container plus manifest sidecar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__, schedule
from .capture import AttentionCapture
from .container import write_container
from .errors import DumpJobError, ImageSizeError, TokenNotFoundError

IMAGE_SIZE = 512
GOAL_CFG = 7.5
RECON_CFG = 0.0


@dataclass(frozen=True)
class DumpJob:
    prompt: str
    seed: int
    out_prefix: str
    cfg_scale: float | None = None   # defaults per mode
    steps: int = 50
    control_image: str | None = None
    input_image: str | None = None   # presence switches to reconstruction
    object_words: tuple[str, ...] = ()  # default: comma-split of prompt

    def __post_init__(self):
        if self.steps < 1:
            raise DumpJobError(f"steps must be >= 1, got {self.steps}")
        cfg = self.cfg_scale
        if cfg is None:
            cfg = RECON_CFG if self.reconstruction else GOAL_CFG
        object.__setattr__(self, "cfg_scale", float(cfg))
        words = self.object_words or tuple(
            w.strip().lower() for w in self.prompt.split(",") if w.strip()
        )
        object.__setattr__(self, "object_words", tuple(words))
        if not words:
            raise DumpJobError("no object words derivable from the prompt")

    @property
    def reconstruction(self) -> bool:
        return self.input_image is not None


def _load_image(path, what: str) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    if arr.shape[:2] != (IMAGE_SIZE, IMAGE_SIZE):
        raise ImageSizeError(
            f"{what} must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {arr.shape[1]}x{arr.shape[0]}"
        )
    return arr


def _resolve_words(job: DumpJob, word_indices: dict) -> list[dict]:
    entries = []
    for word in job.object_words:
        if word not in word_indices:
            raise TokenNotFoundError(
                f"object word {word!r} not found in tokenized prompt {job.prompt!r}"
            )
        entries.append({"word": word, "token_indices": list(word_indices[word])})
    return entries


def _manifest(job: DumpJob, mode: str, entries, timesteps, backend, extra=None) -> dict:
    manifest = {
        "prompt_text": job.prompt,
        "seed": job.seed,
        "cfg_scale": job.cfg_scale,
        "total_steps": job.steps,
        "object_words": entries,
        "recorded_timesteps": timesteps,
        "mode": mode,
        "model": backend.model_id,
        "dump_resolution": backend.latent_size,
        "dumper_version": __version__,
    }
    if job.control_image is not None:
        manifest["control"] = Path(job.control_image).name
    if extra:
        manifest.update(extra)
    return manifest


def _captured_denoise(zT, bars, session, cap: AttentionCapture):
    """Denoise T -> 1, feeding every step's attention into the capture."""
    z = zT
    for t in range(len(bars), 0, -1):
        eps = session.predict(z, t)
        for layer in session.attention_layers(z, eps, t):
            cap.add_layer(layer)
        cap.finalize_timestep(t)
        z = schedule.denoise_step(z, t, eps, bars)
    return z


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    mse = float(((a.astype(np.float64) - b.astype(np.float64)) ** 2).mean())
    if mse == 0:
        return float("inf")
    return 10.0 * math.log10(255.0**2 / mse)


def dump_goal(job: DumpJob, backend) -> Path:
    """Generate a goal scene and its attention dump."""
    if job.reconstruction:
        raise DumpJobError("dump_goal requires a generation-mode job")
    control = None
    if job.control_image is not None:
        control = _load_image(job.control_image, "control image")

    tokens, word_indices = backend.tokenize(job.prompt)
    entries = _resolve_words(job, word_indices)
    bars = schedule.alpha_bars(job.steps)
    session = backend.session(
        tokens, word_indices, job.seed, "goal", bars, job.cfg_scale, control=control
    )

    cap = AttentionCapture(len(tokens))
    z0 = _captured_denoise(session.init_latent(), bars, session, cap)
    try:
        image = session.render()
    except NotImplementedError:
        image = backend.decode(z0)

    timesteps = list(range(job.steps, 0, -1))
    maps = cap.stacked(timesteps)
    manifest = _manifest(job, "goal", entries, timesteps, backend)
    out = Path(f"{job.out_prefix}.paca")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_container(out, tokens, timesteps, maps, manifest)
    Image.fromarray(image, mode="RGB").save(f"{job.out_prefix}.png", format="PNG")
    return out


def dump_reconstruction(job: DumpJob, backend) -> Path:
    """Invert a real image to noise, reconstruct it, and dump attention
    captured during the reconstruction."""
    if not job.reconstruction:
        raise DumpJobError("dump_reconstruction requires an input image")
    image = _load_image(job.input_image, "input image")

    tokens, word_indices = backend.tokenize(job.prompt)
    entries = _resolve_words(job, word_indices)
    bars = schedule.alpha_bars(job.steps)
    session = backend.session(
        tokens, word_indices, job.seed, "real", bars, job.cfg_scale
    )

    z0 = backend.encode(image)
    zT = schedule.invert(z0, bars, session.predict)
    cap = AttentionCapture(len(tokens))
    z0_rec = _captured_denoise(zT, bars, session, cap)
    reconstructed = backend.decode(z0_rec)

    timesteps = list(range(job.steps, 0, -1))
    maps = cap.stacked(timesteps)
    manifest = _manifest(
        job,
        "real",
        entries,
        timesteps,
        backend,
        extra={"reconstruction_psnr_db": round(psnr(image, reconstructed), 3)},
    )
    out = Path(f"{job.out_prefix}.paca")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_container(out, tokens, timesteps, maps, manifest)
    Image.fromarray(reconstructed, mode="RGB").save(
        f"{job.out_prefix}.png", format="PNG"
    )
    return out
