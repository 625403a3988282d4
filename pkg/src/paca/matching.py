"""Per-object rigid-transform recovery between goal and real scenes.

ICP runs on the feature-rich (value-2) pixels of each representation,
initialized from centroid and principal-axis moments of the full
support. Instances are assigned across scenes by minimum total ICP
residual; estimated goal depth is aligned to metric depth by a
closed-form scale/shift fit for the 6-DoF lift.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .attention import Representation
from .core import CameraIntrinsics, Raster2D, RigidTransform
from .errors import (
    DegenerateDepthError,
    DegenerateSetError,
    DegenerateSetWarning,
    EmptyRepresentationError,
    InvalidDepthError,
    MetricInputError,
    ShapeError,
)


@dataclass(frozen=True)
class PointSet:
    """Weighted pixel coordinates (row, col) with optional per-point depth."""

    points: np.ndarray           # (N, 2) float, (row, col)
    weights: np.ndarray | None = None
    depths: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        w = self.weights
        w = np.ones(len(pts)) if w is None else np.asarray(w, dtype=np.float64)
        if w.shape != (len(pts),) or np.any(w < 0):
            raise ValueError("weights must be non-negative, one per point")
        object.__setattr__(self, "weights", w)
        if self.depths is not None:
            d = np.asarray(self.depths, dtype=np.float64)
            if d.shape != (len(pts),):
                raise ValueError("depths length must match points")
            object.__setattr__(self, "depths", d)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class IcpOptions:
    max_iterations: int = 100
    convergence_eps: float = 1e-6   # on residual change

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be > 0")


@dataclass(frozen=True)
class DepthAlignment:
    """Scale/shift mapping estimated depth onto metric depth."""

    scale: float
    shift: float
    residual: float  # mean squared error after the fit


@dataclass(frozen=True)
class MatchResult:
    word: str
    goal_instance: int
    real_instance: int
    transform: RigidTransform
    residual: float

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("residual must be >= 0")


def to_point_set(rep: Representation, level: int) -> PointSet:
    """Pixels with value >= level as points, in row-major order."""
    rows, cols = np.nonzero(rep.values >= level)
    if rows.size == 0:
        raise EmptyRepresentationError(
            f"no pixels at level {level} for {rep.word!r}"
        )
    return PointSet(np.stack([rows, cols], axis=1).astype(np.float64))


def _moments(points: np.ndarray, weights: np.ndarray):
    total = weights.sum()
    cy = float((weights * points[:, 0]).sum() / total)
    cx = float((weights * points[:, 1]).sum() / total)
    dy = points[:, 0] - cy
    dx = points[:, 1] - cx
    mu20 = float((weights * dx * dx).sum() / total)
    mu02 = float((weights * dy * dy).sum() / total)
    mu11 = float((weights * dx * dy).sum() / total)
    return cy, cx, mu20, mu02, mu11


def _principal_angle(mu20: float, mu02: float, mu11: float) -> float:
    # isotropic second moments carry no orientation
    if abs(mu20 - mu02) < 1e-9 and abs(mu11) < 1e-9:
        return 0.0
    return 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)


def pose_of_points(ps: PointSet) -> tuple[float, float, float]:
    """(centroid_row, centroid_col, principal-axis angle) of a point set."""
    cy, cx, mu20, mu02, mu11 = _moments(ps.points, ps.weights)
    return cy, cx, _principal_angle(mu20, mu02, mu11)


def initial_pose(rep: Representation) -> RigidTransform:
    """Pose of a representation: support centroid plus principal-axis angle."""
    ps = to_point_set(rep, 1)
    cy, cx, theta = pose_of_points(ps)
    return RigidTransform(dx=cx, dy=cy, dz=0.0, theta=theta, frame="pixel")


def relative_pose(src: RigidTransform, dst: RigidTransform) -> RigidTransform:
    """Transform mapping a source pose onto a destination pose.

    The rotation is the principal-axis difference wrapped into
    (-pi/2, pi/2] (the axis is only defined modulo pi); translation
    sends the rotated source centroid onto the destination centroid.
    """
    dtheta = dst.theta - src.theta
    dtheta = (dtheta + math.pi / 2) % math.pi - math.pi / 2
    if dtheta <= -math.pi / 2:
        dtheta += math.pi
    c, s = math.cos(dtheta), math.sin(dtheta)
    dx = dst.dx - (c * src.dx - s * src.dy)
    dy = dst.dy - (s * src.dx + c * src.dy)
    return RigidTransform(dx=dx, dy=dy, dz=0.0, theta=dtheta, frame="pixel")


def _fit_rigid(src: np.ndarray, dst: np.ndarray, weights: np.ndarray) -> RigidTransform:
    """Closed-form weighted least-squares rigid fit mapping src onto dst."""
    total = weights.sum()
    src_c = (weights[:, None] * src).sum(axis=0) / total
    dst_c = (weights[:, None] * dst).sum(axis=0) / total
    sp = src - src_c
    dp = dst - dst_c
    # x = col, y = row
    px, py = sp[:, 1], sp[:, 0]
    qx, qy = dp[:, 1], dp[:, 0]
    cross = float((weights * (px * qy - py * qx)).sum())
    dot = float((weights * (px * qx + py * qy)).sum())
    theta = math.atan2(cross, dot) if (cross != 0.0 or dot != 0.0) else 0.0
    c, s = math.cos(theta), math.sin(theta)
    dx = dst_c[1] - (c * src_c[1] - s * src_c[0])
    dy = dst_c[0] - (s * src_c[1] + c * src_c[0])
    return RigidTransform(dx=dx, dy=dy, dz=0.0, theta=theta, frame="pixel")


def _mean_sq(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    return float((weights * ((a - b) ** 2).sum(axis=1)).sum() / weights.sum())


def icp_align(
    src: PointSet,
    dst: PointSet,
    init: RigidTransform | None = None,
    opts: IcpOptions = IcpOptions(),
) -> tuple[RigidTransform, float]:
    """Iterative closest point: alternate nearest-neighbor correspondence
    and the closed-form rigid fit until the residual change falls below
    convergence_eps or max_iterations is reached.

    Returns the transform mapping src into the dst frame and the mean
    squared residual. When dst has a single point and src several, the
    rotation is unobservable: a translation-only transform is returned
    and DegenerateSetWarning is emitted.

    Without an explicit init the centroids are aligned first; identity
    starts fall into wrong nearest-neighbor basins for displacements
    larger than the object extent.
    """
    if len(src) == 0 or len(dst) == 0:
        raise DegenerateSetError("point sets must be nonempty for registration")
    if init is None:
        src_c = src.points.mean(axis=0)
        dst_c = dst.points.mean(axis=0)
        init = RigidTransform(dx=dst_c[1] - src_c[1], dy=dst_c[0] - src_c[0])
    if len(dst) == 1 and len(src) > 1:
        warnings.warn(
            "destination has a single point; returning translation-only transform",
            DegenerateSetWarning,
        )
        total = src.weights.sum()
        src_c = (src.weights[:, None] * src.points).sum(axis=0) / total
        t = RigidTransform(
            dx=float(dst.points[0, 1] - src_c[1]),
            dy=float(dst.points[0, 0] - src_c[0]),
        )
        moved = t.apply(src.points)
        return t, _mean_sq(moved, np.broadcast_to(dst.points[0], moved.shape), src.weights)

    tree = cKDTree(dst.points)
    transform = init
    prev = math.inf
    residual = math.inf
    for _ in range(opts.max_iterations):
        moved = transform.apply(src.points)
        _, idx = tree.query(moved)
        matched = dst.points[idx]
        transform = _fit_rigid(src.points, matched, src.weights)
        moved = transform.apply(src.points)
        residual = _mean_sq(moved, matched, src.weights)
        if abs(prev - residual) < opts.convergence_eps:
            break
        prev = residual
    return transform, residual


def instance_points(rep: Representation, level: int) -> PointSet:
    """Point set at the requested level, falling back to the full support
    when an instance has no feature-rich pixels."""
    try:
        return to_point_set(rep, level)
    except EmptyRepresentationError:
        if level > 1:
            return to_point_set(rep, 1)
        raise


def assign_instances(
    goal: list[Representation],
    real: list[Representation],
    opts: IcpOptions = IcpOptions(),
    level: int = 2,
) -> list[MatchResult]:
    """Minimum-total-residual one-to-one pairing of goal and real instances.

    ICP (real -> goal, per the plan's transform direction) runs for every
    pair; the assignment minimizing the summed residuals is returned.
    Leftover instances on the larger side stay unmatched.
    """
    if not goal or not real:
        return []
    word = goal[0].word
    goal_pts = [instance_points(r, level) for r in goal]
    real_pts = [instance_points(r, level) for r in real]
    goal_pose = [pose_of_points(to_point_set(r, 1)) for r in goal]
    real_pose = [pose_of_points(to_point_set(r, 1)) for r in real]

    residuals = np.zeros((len(goal), len(real)))
    transforms: dict[tuple[int, int], RigidTransform] = {}
    for g in range(len(goal)):
        g_pose = RigidTransform(dx=goal_pose[g][1], dy=goal_pose[g][0], theta=goal_pose[g][2])
        for r in range(len(real)):
            r_pose = RigidTransform(dx=real_pose[r][1], dy=real_pose[r][0], theta=real_pose[r][2])
            init = relative_pose(r_pose, g_pose)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateSetWarning)
                t, res = icp_align(real_pts[r], goal_pts[g], init, opts)
            residuals[g, r] = res
            transforms[(g, r)] = t

    rows, cols = linear_sum_assignment(residuals)
    results = [
        MatchResult(
            word=word,
            goal_instance=int(g),
            real_instance=int(r),
            transform=transforms[(int(g), int(r))],
            residual=float(residuals[g, r]),
        )
        for g, r in zip(rows, cols)
    ]
    results.sort(key=lambda m: m.goal_instance)
    return results


def depth_align(d_est: Raster2D, d_real: Raster2D, mask: Raster2D) -> DepthAlignment:
    """Closed-form least squares for (scale, shift) minimizing the masked
    squared depth difference."""
    if d_est.shape != d_real.shape or d_est.shape != mask.shape:
        raise ShapeError("depth rasters and mask must share dimensions")
    m = mask.values >= 0.5
    e = d_est.values[m]
    r = d_real.values[m]
    if e.size < 2 or float(e.max() - e.min()) == 0.0:
        raise DegenerateDepthError("masked estimated depth is constant")
    e_mean = e.mean()
    r_mean = r.mean()
    var = float(((e - e_mean) ** 2).sum())
    cov = float(((e - e_mean) * (r - r_mean)).sum())
    scale = cov / var
    shift = float(r_mean - scale * e_mean)
    residual = float(((scale * e + shift - r) ** 2).mean())
    return DepthAlignment(scale=scale, shift=shift, residual=residual)


def lift_to_6dof(
    t2d: RigidTransform,
    goal_depth_at_target: float,
    real_depth_at_source: float,
    align: DepthAlignment,
    intrinsics: CameraIntrinsics,
) -> RigidTransform:
    """Combine a pixel-frame planar transform with aligned depths into a
    metric (x, y, z, theta) transform.

    Lateral displacements convert through the pinhole model at the
    object's current metric depth.
    """
    for d in (goal_depth_at_target, real_depth_at_source):
        if not (math.isfinite(d) and d > 0):
            raise InvalidDepthError(f"depth sample {d!r} is masked out or invalid")
    dz = (align.scale * goal_depth_at_target + align.shift) - real_depth_at_source
    return RigidTransform(
        dx=t2d.dx * real_depth_at_source / intrinsics.fx,
        dy=t2d.dy * real_depth_at_source / intrinsics.fy,
        dz=dz,
        theta=t2d.theta,
        frame="metric",
    )


def matching_accuracy(pairs) -> float:
    """Mean over real-goal pairs of (correctly matched) / (total matchings)."""
    ratios = []
    for p in pairs:
        if isinstance(p, dict):
            n_total, n_acc = p["n_total"], p["n_acc"]
        else:
            n_total, n_acc = p
        if n_total < 1:
            raise MetricInputError(f"n_total must be >= 1, got {n_total}")
        if not (0 <= n_acc <= n_total):
            raise MetricInputError(f"n_acc {n_acc} outside [0, {n_total}]")
        ratios.append(n_acc / n_total)
    if not ratios:
        raise MetricInputError("no pairs")
    return float(np.mean(ratios))
