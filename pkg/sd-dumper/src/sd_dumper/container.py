"""Writer for the perception engine's binary dump container.

The wire format is the contract shared with the engine (little-endian):
magic "PACA", version u16 = 1, flags u16 = 0, H u32, W u32, n_tokens
u32, n_timesteps u32; timesteps as n_timesteps x u32 strictly
decreasing; a token table of u16 byte-length + UTF-8 entries; then one
H x W float32 row-major map in [0, 1] per (timestep, token),
timestep-major. The manifest sidecar is ``<name>.manifest.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PACA"
VERSION = 1


def write_container(
    path,
    tokens: list[str],
    timesteps: list[int],
    maps: np.ndarray,
    manifest: dict,
) -> Path:
    """Write the container and its manifest sidecar.

    ``maps`` has shape (n_timesteps, n_tokens, H, W); values are clipped
    to [0, 1] and stored as float32.
    """
    maps = np.clip(np.asarray(maps, dtype=np.float32), 0.0, 1.0)
    if maps.ndim != 4:
        raise ValueError(f"maps must be (t, token, H, W), got shape {maps.shape}")
    n_t, n_tok, h, w = maps.shape
    if n_t != len(timesteps) or n_tok != len(tokens):
        raise ValueError("maps shape disagrees with token/timestep lists")
    if any(t2 >= t1 for t1, t2 in zip(timesteps, timesteps[1:])):
        raise ValueError(f"timesteps must be strictly decreasing: {timesteps}")

    path = Path(path)
    parts = [
        MAGIC,
        struct.pack("<HH", VERSION, 0),
        struct.pack("<IIII", h, w, n_tok, n_t),
        struct.pack(f"<{n_t}I", *[int(t) for t in timesteps]),
    ]
    for tok in tokens:
        raw = tok.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(maps).tobytes())
    path.write_bytes(b"".join(parts))
    sidecar = path.with_name(path.name + ".manifest.json")
    sidecar.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
