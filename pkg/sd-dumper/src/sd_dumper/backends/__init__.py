"""Diffusion backends: a deterministic toy model and a real SD wrapper."""

from __future__ import annotations

from ..errors import BackendUnavailableError


def get_backend(name: str, **kwargs):
    if name == "toy":
        from .toy import ToyDiffusionBackend

        return ToyDiffusionBackend(**kwargs)
    if name == "sd":
        from .sd import StableDiffusionBackend

        return StableDiffusionBackend(**kwargs)
    raise BackendUnavailableError(f"unknown backend {name!r} (expected 'toy' or 'sd')")
