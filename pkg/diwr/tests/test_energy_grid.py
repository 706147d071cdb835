import os
import tempfile

import numpy as np
import numpy.testing as npt
import pandas as pd

from scipy.spatial import cKDTree
from unittest import main, TestCase

from diwr.config import OptimConfig
from diwr.energy_grid import (ball_coverage, band_radius, build_grid,
                              voxel_centers)
from diwr.fixtures import plane_patch, random_cloud
from diwr.pcio import PointCloud


class VoxelCenterTests(TestCase):
    def test_layout(self):
        centers = voxel_centers(4, -0.1, 1.1)

        self.assertEqual(centers.shape, (64, 3))
        npt.assert_allclose(centers[0], [0.05, 0.05, 0.05])
        npt.assert_allclose(centers[-1], [0.95, 0.95, 0.95])
        # C order, the last axis varies fastest
        npt.assert_allclose(centers[1], [0.05, 0.05, 0.35])


class BallCoverageTests(TestCase):
    def test_against_monte_carlo(self):
        rng = np.random.default_rng(0)
        spacing = 0.075
        centers = rng.uniform(0, 1, size=(5, 3))
        balls = centers + rng.uniform(-0.06, 0.06, size=(5, 3))

        covered = ball_coverage(centers, balls, 0.05, spacing)
        for center, ball, value in zip(centers, balls, covered):
            samples = center + rng.uniform(-spacing / 2, spacing / 2,
                                           size=(100000, 3))
            expected = np.mean(np.linalg.norm(samples - ball, axis=1) < 0.05)
            self.assertAlmostEqual(value, expected, delta=0.12)

    def test_extremes(self):
        center = np.array([[0.5, 0.5, 0.5]])
        npt.assert_equal(ball_coverage(center, center, 1.0, 0.1), [1.0])
        npt.assert_equal(ball_coverage(center, center + 1, 0.1, 0.1), [0.0])


class BandRadiusTests(TestCase):
    def setUp(self):
        self.patch = plane_patch(side=10, spacing=0.05,
                                 origin=(0.3, 0.3, 0.5)).cloud.positions

    def test_sparse_anchors_widen_the_band(self):
        self.assertAlmostEqual(band_radius(self.patch, 0.03), 0.05)
        self.assertAlmostEqual(band_radius(self.patch, 0.03, factor=1.5),
                               0.075)
        # capped at cap * r_s
        self.assertAlmostEqual(band_radius(self.patch, 0.03, cap=1.5), 0.045)

    def test_dense_anchors_keep_r_s(self):
        dense = plane_patch(side=30, spacing=0.01).cloud.positions
        self.assertEqual(band_radius(dense, 0.03), 0.03)

    def test_disabled_and_degenerate(self):
        self.assertEqual(band_radius(self.patch, 0.03, factor=0), 0.03)
        self.assertEqual(band_radius(self.patch[:1], 0.03), 0.03)
        self.assertEqual(band_radius(np.empty((0, 3)), 0.03), 0.03)

    def test_grid_uses_the_widened_band(self):
        cloud = PointCloud(self.patch)
        cfg = OptimConfig(grid_resolution=16)
        grid = build_grid(cloud, cfg)
        fixed = build_grid(cloud, cfg.updated(band_spacing=0))

        self.assertAlmostEqual(grid.r_s, 0.05)
        self.assertEqual(fixed.r_s, 0.03)
        self.assertLess(len(grid), len(fixed))
        distance, _ = cKDTree(self.patch).query(grid.positions)
        self.assertTrue(np.all(distance >= 0.05 - 1e-12))


class BuildGridTests(TestCase):
    def setUp(self):
        self.cfg = OptimConfig(grid_resolution=16, band_spacing=0)
        # voxel 8 along every axis is centered at 0.5375
        self.center = -0.1 + 8.5 * 0.075
        self.voxel = 8 * 256 + 8 * 16 + 8

    def test_no_high_confidence_points(self):
        cloud = random_cloud(50, seed=1).with_state(
            confidences=np.zeros(50))
        grid = build_grid(cloud, self.cfg)

        self.assertEqual(len(grid), 16 ** 3)
        npt.assert_equal(grid.deltas, np.ones(16 ** 3))
        self.assertFalse(grid.high_confidence.any())
        self.assertAlmostEqual(grid.voxel_volume, 0.075 ** 3)
        npt.assert_allclose(grid.weights, np.full(16 ** 3, 0.075 ** 3))

    def test_point_at_voxel_center(self):
        cloud = PointCloud([[self.center] * 3])
        grid = build_grid(cloud, self.cfg.updated(r_s=0.15))

        self.assertNotIn(self.voxel, grid.voxel_ids)
        self.assertLess(len(grid), 16 ** 3)

    def test_half_covered_voxel(self):
        r_s = 0.3
        anchor = np.array([self.center - r_s - 1e-6, self.center,
                           self.center])
        grid = build_grid(PointCloud([anchor]), self.cfg.updated(r_s=r_s))

        position = np.flatnonzero(grid.voxel_ids == self.voxel)
        self.assertEqual(len(position), 1)
        self.assertAlmostEqual(grid.deltas[position[0]], 0.5, delta=0.05)

    def test_exclusion_band(self):
        cloud = random_cloud(40, seed=2)
        grid = build_grid(cloud, self.cfg)

        anchors = cloud.positions[cloud.confidences >= 0.9]
        if len(anchors):
            distance, _ = cKDTree(anchors).query(grid.positions)
            self.assertTrue(np.all(distance >= self.cfg.r_s))
        self.assertTrue(np.all(grid.deltas >= 0.5))
        self.assertTrue(np.all(grid.deltas <= 1.0))

    def test_tiny_radius_keeps_everything(self):
        cloud = random_cloud(40, seed=3)
        grid = build_grid(cloud, self.cfg.updated(r_s=1e-9))

        self.assertEqual(len(grid), 16 ** 3)
        npt.assert_equal(grid.deltas, np.ones(16 ** 3))

    def test_higher_threshold_keeps_more(self):
        cloud = random_cloud(200, seed=4)
        loose = build_grid(cloud, self.cfg.updated(r_s=0.08, tau_in=0.5))
        strict = build_grid(cloud, self.cfg.updated(r_s=0.08, tau_in=0.9))

        self.assertGreaterEqual(len(strict), len(loose))

    def test_mask_override_and_determinism(self):
        cloud = random_cloud(60, seed=5)
        mask = np.zeros(60, dtype=bool)
        mask[:10] = True

        first = build_grid(cloud, self.cfg, mask)
        second = build_grid(cloud, self.cfg, mask)
        npt.assert_equal(first.high_confidence, mask)
        npt.assert_array_equal(first.voxel_ids, second.voxel_ids)
        npt.assert_array_equal(first.deltas, second.deltas)

        with self.assertRaises(ValueError):
            first.high_confidence[0] = False

    def test_csv_dump(self):
        grid = build_grid(random_cloud(30, seed=6), self.cfg)

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'grid.csv')
            grid.to_csv(path)
            frame = pd.read_csv(path)

        self.assertEqual(list(frame.columns), ['x', 'y', 'z', 'delta'])
        self.assertEqual(len(frame), len(grid))


if __name__ == '__main__':
    main()
