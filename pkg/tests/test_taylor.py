"""Tests for the affine Taylor enclosures and parameter-space splitting."""

import math

import numpy as np
import pytest

from pointcert import taylor_relax as tr
from pointcert import transforms as tf
from pointcert.transforms import ParamBox, PointCloud

ALL_SPECS = ["rotz", "rotx", "roty", "rotzx", "rotzyx", "shear", "twist", "taper",
             "twist*rotz", "taper*rotz", "twist*taper*rotz"]


def random_box(rng, k, max_half=0.6):
    mid = rng.uniform(-0.5, 0.5, size=k)
    half = rng.uniform(0.01, max_half, size=k)
    return ParamBox(mid - half, mid + half)


class TestWorkedExample:
    def test_rotz_remainder_at_ones(self):
        spec = tf.parse_transform("rotz")
        box = ParamBox([-math.pi / 2], [math.pi / 2])
        lb = tr.taylor_bounds(spec, PointCloud(np.array([[1.0, 1.0, 1.0]])), box)
        # slope at t=0: x coordinate of rotz has d/dtheta = -(x sin + y cos) = -1
        np.testing.assert_allclose(lb.w_l[0, 0], [-1.0], atol=1e-12)
        np.testing.assert_allclose(lb.w_l[0, 1], [1.0], atol=1e-12)
        np.testing.assert_allclose(lb.w_l[0, 2], [0.0], atol=0)
        # t=0 so the remainder is just the intercept minus f(t) = (1,1,1)
        rem_lo = lb.b_l[0] - 1.0
        rem_hi = lb.b_u[0] - 1.0
        expect = math.pi ** 2 / 4
        assert abs(rem_lo[0] + expect) < 1e-12
        assert abs(rem_hi[0] - expect / 2) < 1e-12
        assert abs(rem_lo[1] + expect) < 1e-12
        assert abs(rem_hi[1] - expect / 2) < 1e-12
        assert rem_lo[2] == 0.0 and rem_hi[2] == 0.0

    def test_shear_bounds_exact(self):
        spec = tf.parse_transform("shear")
        rng = np.random.default_rng(3)
        pts = rng.uniform(-2, 2, size=(10, 3))
        box = ParamBox([-0.5, -0.2], [0.3, 0.6])
        lb = tr.taylor_bounds(spec, PointCloud(pts), box)
        assert np.all(lb.b_u - lb.b_l <= 1e-13)
        thetas = tr.sample_box(box, 200, seed=1)
        lower, upper = lb.evaluate(thetas)
        vals = tf.apply_points_batch(spec, pts, thetas)
        assert np.all(np.abs(vals - lower) < 1e-12)
        assert np.all(np.abs(upper - vals) < 1e-12)

    def test_degenerate_box_collapses_to_value(self):
        rng = np.random.default_rng(5)
        for name in ALL_SPECS:
            spec = tf.parse_transform(name)
            theta = rng.uniform(-1, 1, size=spec.param_count)
            pts = rng.uniform(-2, 2, size=(5, 3))
            box = ParamBox(theta, theta)
            lb = tr.taylor_bounds(spec, PointCloud(pts), box)
            lower, upper = lb.evaluate(theta[None, :])
            vals = tf.apply_points(spec, pts, theta)
            assert np.all(np.abs(lower[0] - vals) < 1e-9)
            assert np.all(np.abs(upper[0] - vals) < 1e-9)


class TestSoundness:
    @pytest.mark.parametrize("name", ALL_SPECS)
    def test_sampled_images_enclosed(self, name):
        spec = tf.parse_transform(name)
        rng = np.random.default_rng(hash(name) % 2**32)
        for _ in range(10):
            pts = rng.uniform(-2, 2, size=(8, 3))
            box = random_box(rng, spec.param_count)
            lb = tr.taylor_bounds(spec, PointCloud(pts), box)
            thetas = tr.sample_box(box, 200, seed=int(rng.integers(2**31)))
            lower, upper = lb.evaluate(thetas)
            vals = tf.apply_points_batch(spec, pts, thetas)
            assert np.all(lower <= vals + 1e-9), name
            assert np.all(vals <= upper + 1e-9), name

    def test_remainder_shrinks_on_subboxes(self):
        """Halving the box keeps the remainder interval nested."""
        rng = np.random.default_rng(11)
        for name in ["rotz", "twist", "taper", "rotzyx", "twist*rotz"]:
            spec = tf.parse_transform(name)
            k = spec.param_count
            for _ in range(6):
                pts = rng.uniform(-2, 2, size=(4, 3))
                box = random_box(rng, k)
                t = box.mid
                rlo, rhi = tr._remainder_interval(spec, pts, box, t)
                for axis in range(k):
                    for side in (0, 1):
                        lo = box.lo.copy()
                        hi = box.hi.copy()
                        if side == 0:
                            hi[axis] = t[axis]
                        else:
                            lo[axis] = t[axis]
                        sub = ParamBox(lo, hi)
                        slo, shi = tr._remainder_interval(spec, pts, sub, sub.mid)
                        assert np.all(slo >= rlo - 1e-12)
                        assert np.all(shi <= rhi + 1e-12)
                        assert np.all((shi - slo) <= (rhi - rlo) + 1e-12)

    def test_affine_range_encloses_grid(self):
        rng = np.random.default_rng(13)
        box = ParamBox([-0.4, 0.1], [0.2, 0.9])
        w = rng.normal(size=(6, 2))
        b = rng.normal(size=6)
        lo, hi = tr.affine_range(w, b, b, box)
        thetas = tr.sample_box(box, 400, seed=7)
        vals = thetas @ w.T + b
        assert np.all(vals >= lo[None, :] - 1e-12)
        assert np.all(vals <= hi[None, :] + 1e-12)

    def test_concretize_matches_affine_range(self):
        spec = tf.parse_transform("rotz")
        box = ParamBox([-0.3], [0.5])
        pts = np.array([[1.0, -2.0, 0.5], [0.3, 0.4, -1.0]])
        lb = tr.taylor_bounds(spec, PointCloud(pts), box)
        clo, chi = lb.concretize()
        thetas = tr.sample_box(box, 300, seed=2)
        vals = tf.apply_points_batch(spec, pts, thetas)
        assert np.all(vals >= clo[None] - 1e-9)
        assert np.all(vals <= chi[None] + 1e-9)


class TestSplit:
    def test_paper_grid_counts(self):
        box = ParamBox([-math.radians(60)], [math.radians(60)])
        grid = tr.split(box, math.radians(2))
        assert grid.m == (60,)
        assert len(grid) == 60

    def test_degenerate_box_single_cell(self):
        box = ParamBox([0.0], [0.0])
        grid = tr.split(box, 0.1)
        assert grid.m == (1,)
        cell = grid.cells[0]
        assert cell.lo[0] == 0.0 and cell.hi[0] == 0.0

    def test_two_dim_grid(self):
        r = math.radians(5)
        box = ParamBox([-r, -r], [r, r])
        grid = tr.split(box, math.radians(2))
        assert grid.m == (5, 5)
        assert len(grid) == 25

    def test_cells_tile_box(self):
        box = ParamBox([-1.0, 0.0], [2.0, 0.7])
        grid = tr.split(box, [0.8, 0.3])
        assert grid.m == (4, 3)
        los = np.array([c.lo for c in grid.cells])
        his = np.array([c.hi for c in grid.cells])
        assert np.min(los, axis=0) == pytest.approx(box.lo)
        assert np.max(his, axis=0) == pytest.approx(box.hi)
        # equal widths and seamless edges per dimension
        for i, mi in enumerate(grid.m):
            edges = np.unique(np.concatenate([los[:, i], his[:, i]]))
            assert len(edges) == mi + 1
            assert np.allclose(np.diff(edges), np.diff(edges)[0], rtol=1e-9)
        # random thetas are covered by at least one cell
        rng = np.random.default_rng(17)
        for theta in rng.uniform(box.lo, box.hi, size=(50, 2)):
            assert any(np.all(c.lo <= theta) and np.all(theta <= c.hi)
                       for c in grid.cells)

    def test_bad_granularity(self):
        box = ParamBox([0.0], [1.0])
        with pytest.raises(ValueError):
            tr.split(box, 0.0)
        with pytest.raises(ValueError):
            tr.split(box, -0.5)


class TestEmpiricalReference:
    def test_taylor_encloses_empirical(self):
        rng = np.random.default_rng(19)
        for name in ["rotz", "twist", "taper*rotz"]:
            spec = tf.parse_transform(name)
            pts = rng.uniform(-2, 2, size=(6, 3))
            box = random_box(rng, spec.param_count)
            lb = tr.taylor_bounds(spec, PointCloud(pts), box)
            emp = tr.empirical_optimal_bounds(spec, PointCloud(pts), box, 500)
            assert np.all(lb.b_l <= emp.b_l + 1e-9)
            assert np.all(emp.b_u <= lb.b_u + 1e-9)

    def test_shear_empirical_coincides(self):
        spec = tf.parse_transform("shear")
        pts = np.random.default_rng(23).uniform(-2, 2, size=(5, 3))
        box = ParamBox([-0.4, -0.4], [0.4, 0.4])
        lb = tr.taylor_bounds(spec, PointCloud(pts), box)
        emp = tr.empirical_optimal_bounds(spec, PointCloud(pts), box, 300)
        assert np.all(np.abs(lb.b_l - emp.b_l) < 1e-9)
        assert np.all(np.abs(lb.b_u - emp.b_u) < 1e-9)

    def test_small_rotation_gap_is_tiny(self):
        spec = tf.parse_transform("rotz")
        rng = np.random.default_rng(29)
        pts = rng.uniform(-1, 1, size=(20, 3))
        radius = float(np.max(np.linalg.norm(pts, axis=1)))
        deg = math.radians(1.0)
        box = ParamBox([-deg], [deg])
        lb = tr.taylor_bounds(spec, PointCloud(pts), box)
        emp = tr.empirical_optimal_bounds(spec, PointCloud(pts), box, 10000)
        gap = np.maximum(emp.b_l - lb.b_l, lb.b_u - emp.b_u)
        assert np.all(gap <= 1e-3 * radius)

    def test_quarter_turn_remainder_width(self):
        spec = tf.parse_transform("rotz")
        box = ParamBox([-math.pi / 2], [math.pi / 2])
        cloud = PointCloud(np.array([[1.0, 1.0, 1.0]]))
        emp = tr.empirical_optimal_bounds(spec, cloud, box, 10000)
        width = emp.b_u - emp.b_l
        assert np.all(width <= 3 * math.pi ** 2 / 8 + 1e-9)

    def test_sample_floor(self):
        spec = tf.parse_transform("rotz")
        cloud = PointCloud(np.ones((2, 3)))
        with pytest.raises(ValueError):
            tr.empirical_optimal_bounds(spec, cloud, ParamBox([0], [1]), 50)


class TestLinearBoundsType:
    def test_shape_validation(self):
        box = ParamBox([0.0], [1.0])
        with pytest.raises(ValueError):
            tr.LinearBounds(np.zeros((2, 3)), np.zeros(2), np.zeros((2, 3)),
                            np.zeros(2), box)  # slope missing k axis
        with pytest.raises(ValueError):
            tr.LinearBounds(np.zeros((2, 1)), np.zeros(3), np.zeros((2, 1)),
                            np.zeros(3), box)
        with pytest.raises(ValueError):
            tr.LinearBounds(np.full((2, 1), np.nan), np.zeros(2),
                            np.zeros((2, 1)), np.zeros(2), box)

    def test_evaluate_shapes(self):
        box = ParamBox([-1.0], [1.0])
        lb = tr.LinearBounds(np.ones((4, 3, 1)), np.zeros((4, 3)),
                             np.ones((4, 3, 1)), np.ones((4, 3)), box)
        lower, upper = lb.evaluate(np.array([[0.5], [-0.5]]))
        assert lower.shape == (2, 4, 3)
        assert np.all(upper - lower == 1.0)
