"""Dataset evaluation: assignment correctness against hand labels."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .dumpio import read_dump
from .errors import DatasetFormatError
from .matching import matching_accuracy
from .planner import build_plan
from .runconfig import RunConfig

DATASET_MANIFEST = "dataset.json"


def _load_dataset(dataset_dir: Path) -> list[dict]:
    manifest = dataset_dir / DATASET_MANIFEST
    if not manifest.is_file():
        raise DatasetFormatError(f"missing {DATASET_MANIFEST} in {dataset_dir}")
    try:
        raw = json.loads(manifest.read_text())
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"dataset manifest is not valid JSON: {e}")
    scenes = raw.get("scenes")
    if not isinstance(scenes, list) or not scenes:
        raise DatasetFormatError("dataset manifest must list at least one scene")
    for scene in scenes:
        if "name" not in scene or not isinstance(scene.get("pairs"), list) or not scene["pairs"]:
            raise DatasetFormatError(f"scene {scene.get('name')!r} has no pairs")
        for pair in scene["pairs"]:
            for key in ("goal", "real", "truth"):
                if key not in pair:
                    raise DatasetFormatError(f"pair missing {key!r} in scene {scene['name']!r}")
    return scenes


def _score_pair(plan: dict, truth: dict) -> tuple[int, int]:
    """(n_total, n_acc) for one real-goal pair."""
    n_total = sum(len(v) for v in truth.values())
    if n_total < 1:
        raise DatasetFormatError("ground truth lists no matchings for a pair")
    predicted = set()
    for obj in plan["objects"]:
        for m in obj["matches"]:
            predicted.add((obj["word"], m["goal_instance"], m["real_instance"]))
    n_acc = 0
    for word, pairs in truth.items():
        for g, r in pairs:
            if (word, int(g), int(r)) in predicted:
                n_acc += 1
    return n_total, n_acc


def run_eval(dataset_dir, config: RunConfig) -> dict:
    """Run matching for every labeled pair and report accuracy per scene.

    Only assignment correctness is scored, so matching runs in the
    planar mode regardless of the configured transform mode.
    """
    dataset_dir = Path(dataset_dir)
    scenes = _load_dataset(dataset_dir)
    config = dataclasses.replace(config, mode="3dof", intrinsics=None)

    scene_reports = []
    all_counts = []
    for scene in scenes:
        counts = []
        for pair in scene["pairs"]:
            goal = read_dump(dataset_dir / pair["goal"])
            real = read_dump(dataset_dir / pair["real"])
            plan = build_plan(goal, real, config)
            counts.append(_score_pair(plan, pair["truth"]))
        scene_reports.append(
            {
                "name": scene["name"],
                "pairs": len(counts),
                "matching_accuracy": matching_accuracy(counts),
            }
        )
        all_counts.extend(counts)

    return {
        "version": 1,
        "scenes": scene_reports,
        "overall": {
            "pairs": len(all_counts),
            "matching_accuracy": matching_accuracy(all_counts),
        },
    }
