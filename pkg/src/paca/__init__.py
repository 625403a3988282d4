"""Perception engine for zero-shot tabletop rearrangement.

Turns per-token cross-attention dumps into object-level representations,
matches objects between a generated goal scene and the real scene, and
emits per-object rigid-transform plans (3-DoF and 6-DoF).
"""

__version__ = "0.1.0"

from .core import (
    ENGINE_SIZE,
    CameraIntrinsics,
    ObjectWord,
    PixelPoint,
    PromptManifest,
    Raster2D,
    RgbdFrame,
    RigidTransform,
    bilinear_resize,
    minmax_normalize,
    validate_raster,
)

__all__ = [
    "ENGINE_SIZE",
    "CameraIntrinsics",
    "ObjectWord",
    "PixelPoint",
    "PromptManifest",
    "Raster2D",
    "RgbdFrame",
    "RigidTransform",
    "bilinear_resize",
    "minmax_normalize",
    "validate_raster",
    "__version__",
]
