import itertools
import math

import numpy as np
import pytest

from paca.attention import Representation
from paca.core import CameraIntrinsics, Raster2D, RigidTransform
from paca.errors import (
    DegenerateDepthError,
    DegenerateSetError,
    DegenerateSetWarning,
    EmptyRepresentationError,
    InvalidDepthError,
    MetricInputError,
)
from paca.matching import (
    DepthAlignment,
    IcpOptions,
    PointSet,
    assign_instances,
    depth_align,
    icp_align,
    initial_pose,
    instance_points,
    lift_to_6dof,
    matching_accuracy,
    pose_of_points,
    to_point_set,
)


def rep_from_mask(mask, word="w", level=2):
    return Representation(word, np.asarray(mask, dtype=int) * level)


def apply_rigid(points, dx, dy, theta):
    """Independent transform application used by the oracles below."""
    pts = np.asarray(points, dtype=float)
    c, s = math.cos(theta), math.sin(theta)
    x, y = pts[:, 1], pts[:, 0]
    return np.stack([s * x + c * y + dy, c * x - s * y + dx], axis=1)


def nn_mean_sq(moved, dst):
    d2 = ((moved[:, None, :] - dst[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).mean())


def grid_search_residual(src, dst, center, span=0.05, step=0.01):
    """Exhaustive search over (dx, dy, theta) near ``center``."""
    best = math.inf
    offsets = np.arange(-span, span + step / 2, step)
    for ddx in offsets:
        for ddy in offsets:
            for dth in offsets:
                moved = apply_rigid(src, center[0] + ddx, center[1] + ddy, center[2] + dth)
                best = min(best, nn_mean_sq(moved, dst))
    return best


class TestToPointSet:
    def test_single_level2_pixel(self):
        v = np.zeros((8, 8), dtype=int)
        v[3, 4] = 2
        ps = to_point_set(Representation("w", v), 2)
        np.testing.assert_array_equal(ps.points, [[3.0, 4.0]])

    def test_level2_empty_when_all_level1(self):
        v = np.ones((4, 4), dtype=int)
        with pytest.raises(EmptyRepresentationError):
            to_point_set(Representation("w", v), 2)

    def test_level1_superset_of_level2(self, rng):
        for _ in range(10):
            v = rng.integers(0, 3, size=(10, 10))
            rep = Representation("w", v)
            if not (v >= 1).any():
                continue
            n1 = len(to_point_set(rep, 1))
            n2 = len(to_point_set(rep, 2)) if (v >= 2).any() else 0
            assert n1 >= n2

    def test_row_major_order(self):
        v = np.zeros((4, 4), dtype=int)
        v[1, 2] = 1
        v[0, 3] = 1
        ps = to_point_set(Representation("w", v), 1)
        np.testing.assert_array_equal(ps.points, [[0.0, 3.0], [1.0, 2.0]])


class TestInitialPose:
    def test_disk_theta_zero(self):
        ys, xs = np.mgrid[0:21, 0:21]
        mask = (ys - 10) ** 2 + (xs - 10) ** 2 <= 64
        pose = initial_pose(rep_from_mask(mask))
        assert pose.theta == 0.0
        assert pose.dx == pytest.approx(10.0)
        assert pose.dy == pytest.approx(10.0)

    def test_horizontal_bar_theta_zero(self):
        mask = np.zeros((5, 15), dtype=bool)
        mask[2, 2:13] = True
        pose = initial_pose(rep_from_mask(mask))
        assert abs(pose.theta) < 1e-9

    def test_rotated_bar_angle(self):
        # points along y = x: principal axis at 45 degrees
        v = np.zeros((16, 16), dtype=int)
        for i in range(10):
            v[i, i] = 1
        pose = initial_pose(Representation("w", v))
        assert pose.theta == pytest.approx(math.pi / 4, abs=1e-9)

    def test_single_pixel(self):
        v = np.zeros((8, 8), dtype=int)
        v[5, 6] = 1
        pose = initial_pose(Representation("w", v))
        assert (pose.dx, pose.dy, pose.theta) == (6.0, 5.0, 0.0)

    def test_empty_raises(self):
        with pytest.raises(EmptyRepresentationError):
            initial_pose(Representation("w", np.zeros((4, 4), dtype=int)))


class TestIcpAlign:
    def test_identity_on_equal_sets(self):
        pts = PointSet([[0.0, 0.0], [0.0, 5.0], [5.0, 0.0], [3.0, 3.0]])
        t, res = icp_align(pts, pts)
        assert res == pytest.approx(0.0, abs=1e-12)
        assert abs(t.dx) < 1e-9 and abs(t.dy) < 1e-9 and abs(t.theta) < 1e-9

    def test_translated_square(self):
        square = np.array([[0.0, 0.0], [0.0, 4.0], [4.0, 0.0], [4.0, 4.0]])
        dst = square + np.array([-2.0, 3.0])  # (row, col) shift: dy=-2, dx=3
        t, res = icp_align(PointSet(square), PointSet(dst))
        assert t.dx == pytest.approx(3.0, abs=1e-9)
        assert t.dy == pytest.approx(-2.0, abs=1e-9)
        assert t.theta == pytest.approx(0.0, abs=1e-9)
        assert res < 1e-18

    def test_rotated_l_shape(self):
        src = np.array(
            [[0.0, 0.0], [0.0, 2.0], [0.0, 4.0], [2.0, 0.0], [4.0, 0.0], [2.0, 2.0]]
        )
        theta = math.radians(30.0)
        centroid = src.mean(axis=0)
        dst = apply_rigid(src - centroid, 0, 0, theta) + centroid
        init = RigidTransform(0.0, 0.0)
        t, res = icp_align(PointSet(src), PointSet(dst), init)
        assert abs(math.degrees(t.theta) - 30.0) <= 0.5
        moved = t.apply(src)
        assert np.abs(moved - dst).max() < 1e-6

    def test_matches_grid_search_oracle(self, rng):
        for case in range(10):
            n = int(rng.integers(5, 15))
            src = rng.uniform(0, 20, size=(n, 2))
            dx, dy, theta = [round(v, 2) for v in rng.uniform(-2, 2, size=3)]
            dst = apply_rigid(src, dx, dy, theta)
            init = RigidTransform(dx=dx, dy=dy, theta=theta)  # oracle brackets truth
            t, res = icp_align(PointSet(src), PointSet(dst), init)
            oracle = grid_search_residual(src, dst, (dx, dy, theta))
            assert abs(res - oracle) <= 1e-6

    def test_residual_nonincreasing_over_iterations(self, rng):
        src = rng.uniform(0, 30, size=(40, 2))
        theta = math.radians(25.0)
        dst = apply_rigid(src, 5.0, -3.0, theta)
        prev = math.inf
        for k in range(1, 12):
            opts = IcpOptions(max_iterations=k, convergence_eps=1e-15)
            _, res = icp_align(PointSet(src), PointSet(dst), opts=opts)
            assert res <= prev + 1e-12
            prev = res

    def test_single_point_destination_degrades_with_warning(self):
        src = PointSet([[0.0, 0.0], [0.0, 2.0], [2.0, 0.0]])
        dst = PointSet([[5.0, 5.0]])
        with pytest.warns(DegenerateSetWarning):
            t, res = icp_align(src, dst)
        assert t.theta == 0.0
        # centroid of src lands on the destination point
        moved = t.apply(src.points)
        np.testing.assert_allclose(moved.mean(axis=0), [5.0, 5.0], atol=1e-12)

    def test_empty_sets_rejected(self):
        with pytest.raises(DegenerateSetError):
            icp_align(PointSet(np.zeros((0, 2))), PointSet([[0.0, 0.0]]))

    def test_random_rigid_motions_recovered(self, rng):
        # moment-based init as used by the planner, then ICP refinement
        for _ in range(25):
            n = int(rng.integers(10, 101))
            src = rng.uniform(0, 100, size=(n, 2))
            theta = math.radians(rng.uniform(-45, 45))
            dx, dy = rng.uniform(-50, 50, size=2)
            dst = apply_rigid(src, dx, dy, theta)
            sp = PointSet(src)
            dp = PointSet(dst)
            s_cy, s_cx, s_th = pose_of_points(sp)
            d_cy, d_cx, d_th = pose_of_points(dp)
            from paca.matching import relative_pose

            init = relative_pose(
                RigidTransform(dx=s_cx, dy=s_cy, theta=s_th),
                RigidTransform(dx=d_cx, dy=d_cy, theta=d_th),
            )
            t, res = icp_align(sp, dp, init)
            assert abs(math.degrees(t.theta - theta)) < 1.0
            moved = t.apply(src)
            assert np.abs(moved - dst).max() < 0.5


class TestAssignInstances:
    # identical shapes register with residual ~0 at any displacement, so
    # distinct silhouettes are what makes one pairing cheaper than another
    def _square(self, cy, cx, word="w", size=64, half=3):
        v = np.zeros((size, size), dtype=int)
        v[cy - half : cy + half + 1, cx - half : cx + half + 1] = 2
        return Representation(word, v)

    def _bar(self, cy, cx, word="w", size=64):
        v = np.zeros((size, size), dtype=int)
        v[cy - 1 : cy + 2, cx - 8 : cx + 9] = 2
        return Representation(word, v)

    def test_single_pair(self):
        out = assign_instances([self._square(10, 10)], [self._square(30, 40)])
        assert len(out) == 1
        m = out[0]
        assert (m.goal_instance, m.real_instance) == (0, 0)
        # transform maps the real blob onto the goal blob
        assert m.transform.dx == pytest.approx(10 - 40, abs=1e-6)
        assert m.transform.dy == pytest.approx(10 - 30, abs=1e-6)

    def test_diagonal_optimum(self):
        goal = [self._square(10, 10), self._bar(40, 40)]
        real = [self._square(15, 12), self._bar(44, 38)]
        out = assign_instances(goal, real)
        assert [(m.goal_instance, m.real_instance) for m in out] == [(0, 0), (1, 1)]

    def test_cross_assignment_when_cheaper(self):
        goal = [self._square(10, 10), self._bar(40, 40)]
        real = [self._bar(40, 40), self._square(10, 10)]
        out = assign_instances(goal, real)
        assert [(m.goal_instance, m.real_instance) for m in out] == [(0, 1), (1, 0)]

    def test_empty_inputs(self):
        assert assign_instances([], [self._square(5, 5)]) == []
        assert assign_instances([self._square(5, 5)], []) == []

    def test_unequal_counts_leave_leftovers(self):
        goal = [self._square(10, 10)]
        real = [self._square(10, 10), self._bar(40, 40)]
        out = assign_instances(goal, real)
        assert len(out) == 1
        assert out[0].real_instance == 0


class TestHungarianOptimality:
    def test_hand_enumerated_matrix(self):
        from scipy.optimize import linear_sum_assignment

        costs = np.array([[1.0, 2.0], [2.0, 100.0]])
        rows, cols = linear_sum_assignment(costs)
        assert list(zip(rows, cols)) == [(0, 1), (1, 0)]
        assert costs[rows, cols].sum() == 4.0  # vs 101 for the diagonal

    def test_matches_exhaustive_enumeration(self, rng):
        from scipy.optimize import linear_sum_assignment

        for _ in range(200):
            n = int(rng.integers(1, 5))
            costs = rng.uniform(0, 100, size=(n, n))
            rows, cols = linear_sum_assignment(costs)
            total = costs[rows, cols].sum()
            best = min(
                sum(costs[i, p[i]] for i in range(n))
                for p in itertools.permutations(range(n))
            )
            assert total == pytest.approx(best, abs=1e-9)


class TestDepthAlign:
    def _rasters(self, est, real, mask=None):
        est = np.asarray(est, dtype=float).reshape(1, -1)
        real = np.asarray(real, dtype=float).reshape(1, -1)
        m = np.ones_like(est) if mask is None else np.asarray(mask, dtype=float).reshape(1, -1)
        return Raster2D(est), Raster2D(real), Raster2D(m)

    def test_identity_fit(self):
        est, real, mask = self._rasters([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        a = depth_align(est, real, mask)
        assert a.scale == pytest.approx(1.0)
        assert a.shift == pytest.approx(0.0)
        assert a.residual == pytest.approx(0.0, abs=1e-15)

    def test_hand_normal_equations(self):
        est, real, mask = self._rasters([1.0, 2.0, 3.0], [3.0, 5.0, 7.0])
        a = depth_align(est, real, mask)
        assert a.scale == pytest.approx(2.0, abs=1e-12)
        assert a.shift == pytest.approx(1.0, abs=1e-12)
        assert a.residual == pytest.approx(0.0, abs=1e-15)

    def test_constant_estimate_degenerate(self):
        est, real, mask = self._rasters([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateDepthError):
            depth_align(est, real, mask)

    def test_fit_only_uses_masked_pixels(self):
        est, real, mask = self._rasters(
            [1.0, 2.0, 3.0, 99.0], [3.0, 5.0, 7.0, 0.0], [1, 1, 1, 0]
        )
        a = depth_align(est, real, mask)
        assert a.scale == pytest.approx(2.0, abs=1e-12)

    def test_least_squares_beats_identity(self, rng):
        for _ in range(100):
            e = rng.uniform(0.2, 3.0, size=100)
            s, b = rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5)
            r = s * e + b + rng.normal(scale=0.01, size=100)
            est, real, mask = self._rasters(e, r)
            a = depth_align(est, real, mask)
            identity_res = float(((e - r) ** 2).mean())
            assert a.residual <= identity_res + 1e-15

    def test_gradient_zero_at_fit(self, rng):
        e = rng.uniform(0.2, 3.0, size=50)
        r = 1.7 * e - 0.3 + rng.normal(scale=0.01, size=50)
        est, real, mask = self._rasters(e, r)
        a = depth_align(est, real, mask)

        def loss(s, b):
            return float(((s * e + b - r) ** 2).mean())

        h = 1e-6
        fd_s = (loss(a.scale + h, a.shift) - loss(a.scale - h, a.shift)) / (2 * h)
        fd_b = (loss(a.scale, a.shift + h) - loss(a.scale, a.shift - h)) / (2 * h)
        an_s = float((2 * e * (a.scale * e + a.shift - r)).mean())
        an_b = float((2 * (a.scale * e + a.shift - r)).mean())
        assert abs(fd_s - an_s) < 1e-6 and abs(fd_b - an_b) < 1e-6
        assert abs(fd_s) < 1e-6 and abs(fd_b) < 1e-6


class TestLiftTo6Dof:
    _intr = CameraIntrinsics(fx=500.0, fy=500.0, cx=256.0, cy=256.0)

    def test_identity_transform_equal_depths(self):
        t = lift_to_6dof(
            RigidTransform(0.0, 0.0),
            goal_depth_at_target=0.5,
            real_depth_at_source=0.5,
            align=DepthAlignment(1.0, 0.0, 0.0),
            intrinsics=self._intr,
        )
        assert t.dz == pytest.approx(0.0)
        assert t.frame == "metric"

    def test_direct_subtraction(self):
        t = lift_to_6dof(
            RigidTransform(0.0, 0.0), 0.50, 0.42, DepthAlignment(1.0, 0.0, 0.0), self._intr
        )
        assert t.dz == pytest.approx(0.08, abs=1e-12)

    def test_plugin_arithmetic(self):
        t = lift_to_6dof(
            RigidTransform(0.0, 0.0), 0.3, 1.2, DepthAlignment(2.0, 1.0, 0.0), self._intr
        )
        assert t.dz == pytest.approx(0.4, abs=1e-12)

    def test_pixels_convert_through_pinhole(self):
        t = lift_to_6dof(
            RigidTransform(dx=50.0, dy=-25.0), 0.5, 0.5, DepthAlignment(1.0, 0.0, 0.0), self._intr
        )
        assert t.dx == pytest.approx(50.0 * 0.5 / 500.0)
        assert t.dy == pytest.approx(-25.0 * 0.5 / 500.0)
        assert t.theta == 0.0

    def test_invalid_depth_rejected(self):
        with pytest.raises(InvalidDepthError):
            lift_to_6dof(
                RigidTransform(0.0, 0.0), 0.0, 0.5, DepthAlignment(1.0, 0.0, 0.0), self._intr
            )


class TestMatchingAccuracy:
    def test_single_pair(self):
        assert matching_accuracy([(3, 2)]) == pytest.approx(2 / 3, abs=1e-4)

    def test_two_pairs(self):
        assert matching_accuracy([(3, 3), (3, 0)]) == pytest.approx(0.5)

    def test_perfect_over_many(self):
        assert matching_accuracy([(1, 1)] * 150) == 1.0

    def test_dict_inputs(self):
        assert matching_accuracy([{"n_total": 4, "n_acc": 3}]) == pytest.approx(0.75)

    def test_rejects_bad_counts(self):
        with pytest.raises(MetricInputError):
            matching_accuracy([(0, 0)])
        with pytest.raises(MetricInputError):
            matching_accuracy([(2, 3)])

    def test_bounded(self, rng):
        for _ in range(50):
            pairs = [
                (int(n), int(rng.integers(0, n + 1)))
                for n in rng.integers(1, 10, size=8)
            ]
            assert 0.0 <= matching_accuracy(pairs) <= 1.0


class TestInstancePoints:
    def test_falls_back_to_level1(self):
        v = np.zeros((8, 8), dtype=int)
        v[2:4, 2:4] = 1  # no level-2 pixels
        ps = instance_points(Representation("w", v), 2)
        assert len(ps) == 4
