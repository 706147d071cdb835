import json

import numpy as np
import numpy.testing as npt

from unittest import main, TestCase

from diwr.confidence import (DENSITY_LEVELS, ConfidenceResetReport,
                             bimeans_split, compute_densities,
                             density_levels, density_stratified_reset,
                             reset_confidences)
from diwr.pcio import PointCloud


class BimeansTests(TestCase):
    def test_single_high_outlier(self):
        binary, report = bimeans_split([0.1, 0.1, 0.9])

        npt.assert_equal(binary, [1, 1, 0])
        self.assertAlmostEqual(report.outlier_cluster_mean, 0.9)
        self.assertAlmostEqual(report.inlier_cluster_mean, 0.1)
        self.assertAlmostEqual(report.global_mean, 1.1 / 3)
        self.assertEqual(report.outlier_count, 1)

    def test_far_value(self):
        binary, report = bimeans_split([0.45, 0.5, 0.55, 3.0])

        npt.assert_equal(binary, [1, 1, 1, 0])
        self.assertAlmostEqual(report.inlier_cluster_mean, 0.5)

    def test_low_outliers(self):
        values = np.concatenate([np.full(20, 0.5), [-0.4, -0.5]])
        binary, report = bimeans_split(values)

        npt.assert_equal(binary, [1] * 20 + [0, 0])
        self.assertAlmostEqual(report.outlier_cluster_mean, -0.45)

    def test_all_equal(self):
        binary, report = bimeans_split(np.full(5, 0.5))

        npt.assert_equal(binary, np.ones(5))
        self.assertEqual(report.outlier_count, 0)
        self.assertEqual(report.global_mean, 0.5)

    def test_tie_marks_the_higher_cluster(self):
        binary, _ = bimeans_split([0.0, 1.0])
        npt.assert_equal(binary, [1, 0])

    def test_iteration_cap_reports_final_means(self):
        # the first Lloyd pass moves 0.51 to the lower cluster
        values = [0.0, 0.35, 0.35, 0.35, 0.35, 0.51, 1.0]
        for cap in (1, 100):
            binary, report = bimeans_split(values, max_iterations=cap)

            npt.assert_equal(binary, [1, 1, 1, 1, 1, 1, 0])
            self.assertAlmostEqual(report.outlier_cluster_mean, 1.0)
            self.assertAlmostEqual(report.inlier_cluster_mean, 1.91 / 6)

    def test_too_few_values(self):
        with self.assertRaisesRegex(ValueError, 'at least 2'):
            bimeans_split([0.5])


class DensityLevelTests(TestCase):
    def test_levels(self):
        npt.assert_equal(density_levels([0, 5, 10], levels=4), [0, 2, 3])
        npt.assert_equal(density_levels([3, 3, 3]), [0, 0, 0])

        levels = density_levels(np.arange(1000))
        self.assertEqual(levels.min(), 0)
        self.assertEqual(levels.max(), DENSITY_LEVELS - 1)

    def test_compute_densities(self):
        cloud = PointCloud([[0, 0, 0], [1, 0, 0], [2, 0, 0], [10, 0, 0]])

        # the radius itself counts
        npt.assert_equal(compute_densities(cloud, 1.0), [1, 2, 1, 0])
        npt.assert_equal(compute_densities(cloud, 0.5), [0, 0, 0, 0])


class StratifiedResetTests(TestCase):
    def setUp(self):
        # two density levels with two points each
        self.cloud = PointCloud(np.zeros((4, 3)),
                                confidences=[0.2, 0.4, 0.6, 0.8],
                                densities=[1, 1, 9, 9])

    def test_level_means(self):
        binary = [1, 0, 1, 1]
        winding = [5.0, 5.0, -5.0, -5.0]
        reset, report = density_stratified_reset(
            self.cloud, binary, winding, global_mean=0.0, levels=2,
            report=ConfidenceResetReport(0.0, 1.0, 0.0))

        npt.assert_equal(reset, [0.5, 0.5, 1.0, 1.0])
        npt.assert_equal(report.level_means, [0.5, 1.0])
        self.assertEqual(report.protected_count, 0)

    def test_protection_band(self):
        binary = [0, 0, 0, 0]
        winding = [0.5, 0.55, 0.65, 2.0]
        reset, report = density_stratified_reset(
            self.cloud, binary, winding, global_mean=0.5, levels=2, band=0.1,
            report=ConfidenceResetReport(0.0, 1.0, 0.5))

        # the first two are within the band and keep their value
        npt.assert_allclose(reset, [0.2, 0.4, 0.0, 0.0])
        self.assertEqual(report.protected_count, 2)

    def test_empty_levels(self):
        reset, report = density_stratified_reset(
            self.cloud, [1, 1, 0, 0], [9.0] * 4, global_mean=0.0, levels=4,
            report=ConfidenceResetReport(0.0, 1.0, 0.0))

        npt.assert_equal(reset, [1, 1, 0, 0])
        self.assertTrue(np.isnan(report.level_means[1]))
        self.assertTrue(np.isnan(report.level_means[2]))
        self.assertEqual(json.loads(report.to_json())['level_means'],
                         [1.0, None, None, 0.0])

    def test_without_report(self):
        reset, report = density_stratified_reset(self.cloud, [1, 1, 1, 1],
                                                 [3.0] * 4)
        self.assertIsNone(report)
        # everything sits on the global mean
        npt.assert_equal(reset, self.cloud.confidences)

    def test_reset_confidences(self):
        n = 40
        densities = np.r_[np.full(30, 10), np.full(10, 2)]
        cloud = PointCloud(np.zeros((n, 3)), confidences=np.full(n, 0.7),
                           densities=densities)
        winding = np.r_[np.full(30, 0.5), np.full(10, 3.0)]

        reset, report = reset_confidences(cloud, winding)

        self.assertEqual(report.outlier_count, 10)
        self.assertAlmostEqual(report.global_mean, 1.125)
        npt.assert_equal(reset[:30], np.ones(30))
        npt.assert_equal(reset[30:], np.zeros(10))
        self.assertTrue(np.all((reset >= 0) & (reset <= 1)))


if __name__ == '__main__':
    main()
