"""Diagnostic overlay: tinted representations, grasp points, match arrows."""

from __future__ import annotations

import math

import numpy as np

from .attention import Representation
from .core import RgbdFrame, RigidTransform

# fixed palette, assigned by first appearance of each word
PALETTE = (
    (230, 60, 60),
    (60, 160, 230),
    (60, 200, 90),
    (235, 180, 50),
    (170, 90, 220),
    (240, 120, 40),
    (70, 210, 200),
    (200, 200, 200),
)

_TINT_LVL1 = 0.45
_TINT_LVL2 = 0.85


def _blend(base: np.ndarray, mask: np.ndarray, color, alpha: float) -> None:
    c = np.asarray(color, dtype=np.float64)
    base[mask] = (1.0 - alpha) * base[mask] + alpha * c


def _disk(img: np.ndarray, row: int, col: int, radius: int, color) -> None:
    h, w = img.shape[:2]
    r0, r1 = max(0, row - radius), min(h, row + radius + 1)
    c0, c1 = max(0, col - radius), min(w, col + radius + 1)
    if r0 >= r1 or c0 >= c1:
        return
    ys, xs = np.mgrid[r0:r1, c0:c1]
    mask = (ys - row) ** 2 + (xs - col) ** 2 <= radius**2
    img[r0:r1, c0:c1][mask] = color


def _line(img: np.ndarray, r0: float, c0: float, r1: float, c1: float, color) -> None:
    h, w = img.shape[:2]
    n = max(2, int(math.ceil(math.hypot(r1 - r0, c1 - c0))) * 2 + 1)
    rows = np.rint(np.linspace(r0, r1, n)).astype(int)
    cols = np.rint(np.linspace(c0, c1, n)).astype(int)
    ok = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    img[rows[ok], cols[ok]] = color


def render_overlay(
    frame, representations: list[Representation], plan: dict
) -> np.ndarray:
    """Compose an overlay image; an empty plan with no representations
    returns an unmodified copy of the frame.

    ``frame`` is an RgbdFrame or a bare (H, W, 3) color array.
    """
    color = frame.color if isinstance(frame, RgbdFrame) else frame
    out = np.asarray(color, dtype=np.float64).copy()
    word_order: dict[str, int] = {}
    for rep in representations:
        if rep.word not in word_order:
            word_order[rep.word] = len(word_order)
        tint = PALETTE[word_order[rep.word] % len(PALETTE)]
        lvl1 = rep.values >= 1
        lvl2 = rep.values >= 2
        _blend(out, lvl1, tint, _TINT_LVL1)
        _blend(out, lvl2, tint, _TINT_LVL2)

    img = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    for obj in plan.get("objects", []):
        for m in obj.get("matches", []):
            t = m["transform"]
            if t["frame"] != "pixel":
                continue
            gp = m["grasp_point"]
            transform = RigidTransform(
                dx=t["dx"], dy=t["dy"], dz=t["dz"], theta=t["theta"], frame="pixel"
            )
            end = transform.apply(np.array([[gp["row"], gp["col"]]], dtype=float))[0]
            _line(img, gp["row"], gp["col"], end[0], end[1], (255, 255, 255))
            _disk(img, gp["row"], gp["col"], 2, (255, 255, 255))
            _disk(img, int(round(end[0])), int(round(end[1])), 3, (0, 0, 0))
    return img
