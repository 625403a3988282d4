"""Matching orchestration: representations -> instances -> transforms -> plan.

Plan transforms map the REAL instance onto the GOAL instance (what the
robot must do). Plan JSON is deterministic: keys sorted, floats at nine
significant digits.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .attention import AttentionStack, Representation, grasp_point, split_instances
from .core import Raster2D
from .errors import EmptyRepresentationError, InvalidDepthError, VocabularyError
from .matching import DepthAlignment, assign_instances, depth_align, lift_to_6dof
from .runconfig import RunConfig

PLAN_VERSION = 1


@dataclass(frozen=True)
class DepthInputs:
    """Estimated goal depth and measured real depth, both with masks."""

    goal_est: Raster2D
    goal_valid: Raster2D
    real: Raster2D
    real_valid: Raster2D


def shared_words(goal: AttentionStack, real: AttentionStack) -> list[str]:
    common = sorted(set(goal.words) & set(real.words))
    if not common:
        raise VocabularyError(
            f"no shared object words between goal {goal.words} and real {real.words}"
        )
    return common


def _instance_depth(rep: Representation, depth: Raster2D, valid: Raster2D) -> float:
    """Median valid depth over the instance support."""
    support = rep.support & (valid.values >= 0.5)
    vals = depth.values[support]
    if vals.size == 0:
        raise InvalidDepthError(f"no valid depth inside support of {rep.word!r}")
    return float(np.median(vals))


def _match_word(
    word: str,
    goal_stack: AttentionStack,
    real_stack: AttentionStack,
    config: RunConfig,
    alignment: DepthAlignment | None,
    depths: DepthInputs | None,
) -> dict:
    goal_rep = goal_stack.representation(word, config.tau1, config.tau2)
    real_rep = real_stack.representation(word, config.tau1, config.tau2)
    goal_insts = split_instances(goal_rep, config.min_instance_area)
    real_insts = split_instances(real_rep, config.min_instance_area)

    entry: dict = {"word": word, "matches": []}
    matches = []
    if goal_insts and real_insts:
        matches = assign_instances(
            goal_insts, real_insts, config.icp, level=config.icp_point_level
        )
    for m in matches:
        transform = m.transform
        if config.mode == "6dof":
            assert alignment is not None and depths is not None
            goal_d = _instance_depth(
                goal_insts[m.goal_instance], depths.goal_est, depths.goal_valid
            )
            real_d = _instance_depth(
                real_insts[m.real_instance], depths.real, depths.real_valid
            )
            transform = lift_to_6dof(
                transform, goal_d, real_d, alignment, config.intrinsics
            )
        grasp = grasp_point(real_insts[m.real_instance])
        entry["matches"].append(
            {
                "goal_instance": m.goal_instance,
                "real_instance": m.real_instance,
                "transform": {
                    "dx": transform.dx,
                    "dy": transform.dy,
                    "dz": transform.dz,
                    "theta": transform.theta,
                    "frame": transform.frame,
                },
                "residual": m.residual,
                "grasp_point": {"row": grasp.row, "col": grasp.col},
            }
        )
    matched_goal = {m.goal_instance for m in matches}
    matched_real = {m.real_instance for m in matches}
    entry["unmatched_goal"] = [i for i in range(len(goal_insts)) if i not in matched_goal]
    entry["unmatched_real"] = [i for i in range(len(real_insts)) if i not in matched_real]
    return entry


def build_plan(
    goal_stack: AttentionStack,
    real_stack: AttentionStack,
    config: RunConfig,
    depths: DepthInputs | None = None,
) -> dict:
    """Match every shared object word and assemble the plan document."""
    words = shared_words(goal_stack, real_stack)

    alignment = None
    if config.mode == "6dof":
        if depths is None:
            raise InvalidDepthError("6dof mode requires goal and real depth inputs")
        both_valid = Raster2D(
            ((depths.goal_valid.values >= 0.5) & (depths.real_valid.values >= 0.5)).astype(
                np.float64
            )
        )
        alignment = depth_align(depths.goal_est, depths.real, both_valid)

    def run(word: str) -> dict:
        try:
            return _match_word(word, goal_stack, real_stack, config, alignment, depths)
        except EmptyRepresentationError:
            # no usable support on one side: report the word as unmatched
            return {"word": word, "matches": [], "unmatched_goal": [], "unmatched_real": []}

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            objects = list(pool.map(run, words))
    else:
        objects = [run(w) for w in words]

    plan = {
        "version": PLAN_VERSION,
        "mode": config.mode,
        "objects": objects,
        "provenance": {
            "goal_manifest": goal_stack.manifest.to_dict(),
            "real_manifest": real_stack.manifest.to_dict(),
            "config_hash": config.hash(),
            "engine_version": __version__,
        },
    }
    if alignment is not None:
        plan["depth_alignment"] = {
            "scale": alignment.scale,
            "shift": alignment.shift,
            "residual": alignment.residual,
        }
    return plan


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, ".9g"))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(v) for v in obj]
    return obj


def plan_to_json(plan: dict) -> str:
    """Deterministic serialization: sorted keys, 9 significant digits."""
    return json.dumps(_round_floats(plan), sort_keys=True, indent=2) + "\n"
