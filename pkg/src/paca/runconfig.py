"""Run configuration: thresholds, Hough/ICP parameters, camera intrinsics."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import CameraIntrinsics
from .errors import ConfigError
from .matching import IcpOptions
from .perspective import HoughParams


@dataclass(frozen=True)
class RunConfig:
    tau1: float = 0.3
    tau2: float = 0.9
    total_steps: int = 50
    mode: str = "3dof"  # "3dof" | "6dof"
    hough: HoughParams = field(default_factory=HoughParams)
    icp: IcpOptions = field(default_factory=IcpOptions)
    min_instance_area: int = 25
    intrinsics: CameraIntrinsics | None = None
    icp_point_level: int = 2
    workers: int = 1

    def __post_init__(self):
        if not (0.0 <= self.tau1 <= self.tau2 <= 1.0):
            raise ConfigError(
                f"need 0 <= tau1 <= tau2 <= 1, got tau1={self.tau1}, tau2={self.tau2}"
            )
        if self.mode not in ("3dof", "6dof"):
            raise ConfigError(f"mode must be '3dof' or '6dof', got {self.mode!r}")
        if self.mode == "6dof" and self.intrinsics is None:
            raise ConfigError("6dof mode requires camera intrinsics")
        if self.mode == "3dof" and self.intrinsics is not None:
            raise ConfigError("intrinsics are only meaningful in 6dof mode")
        if self.icp_point_level not in (1, 2):
            raise ConfigError("icp_point_level must be 1 or 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_dict(self) -> dict:
        d = {
            "tau1": self.tau1,
            "tau2": self.tau2,
            "total_steps": self.total_steps,
            "mode": self.mode,
            "hough": {
                "rho_resolution": self.hough.rho_resolution,
                "theta_resolution": self.hough.theta_resolution,
                "vote_threshold": self.hough.vote_threshold,
                "max_lines": self.hough.max_lines,
                "canny_low": self.hough.canny_low,
                "canny_high": self.hough.canny_high,
            },
            "icp": {
                "max_iterations": self.icp.max_iterations,
                "convergence_eps": self.icp.convergence_eps,
            },
            "min_instance_area": self.min_instance_area,
            "icp_point_level": self.icp_point_level,
            "workers": self.workers,
        }
        if self.intrinsics is not None:
            d["intrinsics"] = {
                "fx": self.intrinsics.fx,
                "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx,
                "cy": self.intrinsics.cy,
            }
        return d

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("workers")  # execution detail, cannot affect outputs
        canon = json.dumps(d, sort_keys=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def config_from_dict(d: dict) -> RunConfig:
    try:
        kwargs: dict = {}
        if "T" in d:
            kwargs["total_steps"] = d["T"]
        for key in (
            "tau1",
            "tau2",
            "total_steps",
            "mode",
            "min_instance_area",
            "icp_point_level",
            "workers",
        ):
            if key in d:
                kwargs[key] = d[key]
        if "hough" in d:
            kwargs["hough"] = HoughParams(**d["hough"])
        if "icp" in d:
            kwargs["icp"] = IcpOptions(**d["icp"])
        if "intrinsics" in d and d["intrinsics"] is not None:
            kwargs["intrinsics"] = CameraIntrinsics(**d["intrinsics"])
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad config value: {e}")


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError:
        raise
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(raw)
