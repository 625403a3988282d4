"""Shared synthetic-dump fixtures.

Dumps are built from Gaussian activation blobs: a broad blob at the
mid-trajectory timestep (object region) and a tight one at the final
timestep (feature-rich core), mirroring how attention concentrates as
denoising proceeds.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from paca.core import ObjectWord, PromptManifest
from paca.dumpio import write_dump


def gaussian_blob(h: int, w: int, cy: float, cx: float, sigma: float) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sigma**2))


def blob_maps(
    res: int, centers: list[tuple[float, float]], sigma_mid: float, sigma_final: float
) -> tuple[np.ndarray, np.ndarray]:
    """(mid, final) activation maps with one blob per center."""
    mid = np.zeros((res, res))
    final = np.zeros((res, res))
    for cy, cx in centers:
        mid = np.maximum(mid, gaussian_blob(res, res, cy, cx, sigma_mid))
        final = np.maximum(final, gaussian_blob(res, res, cy, cx, sigma_final))
    return mid, final


def make_blob_dump(
    path: Path,
    word_centers: dict[str, list[tuple[float, float]]],
    res: int = 64,
    total_steps: int = 50,
    recorded: tuple[int, ...] = (25, 1),
    mode: str = "goal",
    seed: int = 0,
    sigma_mid: float | None = None,
    sigma_final: float | None = None,
) -> Path:
    """Write a synthetic dump with one token per object word."""
    sigma_mid = sigma_mid if sigma_mid is not None else res * 0.08
    sigma_final = sigma_final if sigma_final is not None else res * 0.035
    words = list(word_centers)
    maps = np.zeros((len(recorded), len(words), res, res), dtype=np.float32)
    mid_index = int(np.argmin([abs(t - total_steps / 2) for t in recorded]))
    for wi, word in enumerate(words):
        mid, final = blob_maps(res, word_centers[word], sigma_mid, sigma_final)
        for ti in range(len(recorded)):
            maps[ti, wi] = (mid if ti <= mid_index else final).astype(np.float32)
    manifest = PromptManifest(
        prompt_text=", ".join(words),
        seed=seed,
        cfg_scale=7.5 if mode == "goal" else 0.0,
        total_steps=total_steps,
        object_words=tuple(ObjectWord(w, (i,)) for i, w in enumerate(words)),
        recorded_timesteps=recorded,
        mode=mode,
    )
    return write_dump(path, words, list(recorded), maps, manifest,
                      sidecar_extra={"model": "synthetic-fixture", "dump_resolution": res})


def make_goal_real_pair(tmp_path: Path, shift=(0.0, 0.0), res: int = 128):
    """Goal dump plus a real dump whose blobs are shifted by (drow, dcol)
    at dump resolution."""
    centers = {"apple": [(40.0, 40.0)], "plate": [(80.0, 90.0)]}
    shifted = {
        w: [(cy + shift[0], cx + shift[1]) for cy, cx in cs] for w, cs in centers.items()
    }
    goal = make_blob_dump(tmp_path / "goal.paca", centers, res=res, mode="goal")
    real = make_blob_dump(tmp_path / "real.paca", shifted, res=res, mode="real")
    return goal, real


def make_eval_dataset(tmp_path: Path, wrong_label: bool = False) -> Path:
    """Two labeled self-match pairs of two objects each; optionally one
    ground-truth label pointing at a nonexistent instance."""
    import json

    root = tmp_path / "dataset"
    root.mkdir(parents=True)
    pairs = []
    for i, cx in enumerate((40.0, 44.0)):
        centers = {"apple": [(40.0, cx)], "plate": [(80.0, 90.0)]}
        make_blob_dump(root / f"goal{i}.paca", centers, res=128, mode="goal")
        make_blob_dump(root / f"real{i}.paca", centers, res=128, mode="real")
        truth = {"apple": [[0, 0]], "plate": [[0, 0]]}
        if wrong_label and i == 1:
            truth["plate"] = [[0, 1]]  # nonexistent real instance: never matched
        pairs.append({"goal": f"goal{i}.paca", "real": f"real{i}.paca", "truth": truth})
    (root / "dataset.json").write_text(
        json.dumps({"version": 1, "scenes": [{"name": "toy", "pairs": pairs}]})
    )
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
