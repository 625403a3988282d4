"""Attention-map dumper for text-to-image latent diffusion models.

Generates goal images (or inverts and reconstructs real ones), captures
per-token cross-attention maps at every denoising step, and writes the
perception engine's binary dump container plus its manifest sidecar.
"""

__version__ = "0.1.0"
