"""Binary attention-dump container and its sidecar manifest.

Layout (little-endian): magic "PACA", version u16 = 1, flags u16 = 0,
H u32, W u32, n_tokens u32, n_timesteps u32; the timestep list
(n_timesteps x u32, strictly decreasing); a token table of u16
byte-length + UTF-8 entries; then one H x W float32 row-major map per
(timestep, token), timestep-major, values in [0, 1]. The manifest lives
next to the container as ``<name>.manifest.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .attention import AttentionStack
from .core import PromptManifest, Raster2D, validate_raster
from .errors import FormatError, ManifestMismatchError

MAGIC = b"PACA"
VERSION = 1


def manifest_path(dump_path) -> Path:
    p = Path(dump_path)
    return p.with_name(p.name + ".manifest.json")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise FormatError("container truncated", offset=self.offset)
        out = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return out

    def take_bytes(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError("container truncated", offset=self.offset)
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out


def write_dump(
    path,
    tokens: list[str],
    timesteps: list[int],
    maps: np.ndarray,
    manifest: PromptManifest,
    sidecar_extra: dict | None = None,
) -> Path:
    """Write a container plus manifest sidecar.

    ``maps`` has shape (n_timesteps, n_tokens, H, W) and is stored as
    float32 exactly as given.
    """
    maps = np.asarray(maps, dtype=np.float32)
    if maps.ndim != 4:
        raise ValueError(f"maps must be 4-D (t, token, H, W), got {maps.shape}")
    n_t, n_tok, h, w = maps.shape
    if n_t != len(timesteps) or n_tok != len(tokens):
        raise ValueError("maps shape disagrees with token/timestep lists")
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

    sidecar = dict(manifest.to_dict())
    if sidecar_extra:
        sidecar.update(sidecar_extra)
    manifest_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return path


def read_container(path) -> tuple[list[str], list[int], np.ndarray]:
    """Parse a container into (tokens, timesteps, float32 maps)."""
    try:
        data = Path(path).read_bytes()
    except OSError:
        raise
    r = _Reader(data)
    magic = r.take_bytes(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    version, flags = r.take("<HH")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if flags != 0:
        raise FormatError(f"unsupported flags {flags}", offset=6)
    h, w, n_tok, n_t = r.take("<IIII")
    timesteps = list(r.take(f"<{n_t}I"))
    if any(t2 >= t1 for t1, t2 in zip(timesteps, timesteps[1:])):
        raise FormatError(f"timesteps not strictly decreasing: {timesteps}", offset=r.offset)
    tokens = []
    for _ in range(n_tok):
        (length,) = r.take("<H")
        raw = r.take_bytes(length)
        try:
            tokens.append(raw.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise FormatError(f"token table not UTF-8: {e}", offset=r.offset - length)
    payload = r.take_bytes(n_t * n_tok * h * w * 4)
    if r.offset != len(data):
        raise FormatError(
            f"{len(data) - r.offset} trailing bytes after payload", offset=r.offset
        )
    maps = np.frombuffer(payload, dtype="<f4").reshape(n_t, n_tok, h, w)
    return tokens, timesteps, maps


def read_manifest(path) -> tuple[PromptManifest, dict]:
    """Load the sidecar manifest; returns the manifest and the raw dict."""
    mpath = manifest_path(path)
    try:
        raw = json.loads(mpath.read_text())
    except OSError:
        raise
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest is not valid JSON: {e}")
    try:
        manifest = PromptManifest.from_dict(raw)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"manifest missing or invalid field: {e}")
    return manifest, raw


def read_dump(path) -> AttentionStack:
    """Read, validate, and assemble a dump into an attention stack.

    Raw maps are checked against [0, 1] here; resizing to the engine
    canon and per-map normalization happen on stack access.
    """
    tokens, timesteps, maps = read_container(path)
    manifest, _ = read_manifest(path)

    if list(manifest.recorded_timesteps) != timesteps:
        raise ManifestMismatchError(
            f"manifest timesteps {list(manifest.recorded_timesteps)} "
            f"!= container timesteps {timesteps}"
        )
    for ow in manifest.object_words:
        if not ow.token_indices:
            raise ManifestMismatchError(f"word {ow.word!r} has no token indices")
        for i in ow.token_indices:
            if not (0 <= i < len(tokens)):
                raise ManifestMismatchError(
                    f"word {ow.word!r} token index {i} outside token table "
                    f"of size {len(tokens)}"
                )

    raw: dict[int, list[Raster2D]] = {}
    for ti, t in enumerate(timesteps):
        per_token = []
        for ki in range(len(tokens)):
            r = Raster2D(maps[ti, ki].astype(np.float64))
            validate_raster(r, 0.0, 1.0)
            per_token.append(r)
        raw[t] = per_token
    return AttentionStack(manifest, raw, tokens=tuple(tokens))


def write_stack(path, stack: AttentionStack) -> Path:
    """Re-serialize a stack read by read_dump; an exact inverse of it."""
    timesteps = list(stack.manifest.recorded_timesteps)
    n_tok = len(stack.tokens)
    maps = np.stack(
        [
            np.stack([stack.raw_map(t, k).values for k in range(n_tok)])
            for t in timesteps
        ]
    ).astype(np.float32)
    return write_dump(path, list(stack.tokens), timesteps, maps, stack.manifest)
