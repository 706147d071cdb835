import json

import numpy as np
import numpy.testing as npt

from unittest import main, TestCase

from diwr.config import OptimConfig
from diwr.energies import (AREA, CONF, EnergyModel, StageBaseline,
                           _surface_term, area_energy, conf_energy,
                           dirichlet_energy, grad_area, grad_conf,
                           objective_area, objective_conf, surface_energy)
from diwr.energy_grid import build_grid
from diwr.exceptions import EmptyHighConfidenceSet, StaleTree
from diwr.fixtures import random_cloud
from diwr.pcio import PointCloud
from diwr.winding import WindingEvaluator

GRID = OptimConfig(grid_resolution=8)


def anchored_grid(cloud, count=10):
    """Energy grid with the first `count` points as the high-confidence set"""
    mask = np.zeros(len(cloud), dtype=bool)
    mask[:count] = True
    return build_grid(cloud, GRID, mask)


def shifted_baseline(cloud, factor=0.5):
    """A baseline far enough from the cloud to keep E_area differentiable"""
    return StageBaseline.capture(
        cloud.with_state(area_weights=factor * cloud.area_weights))


class TermTests(TestCase):
    def test_conf_energy(self):
        positions = np.zeros((2, 3))
        self.assertEqual(conf_energy(PointCloud(positions,
                                                confidences=[0, 1])), 0)
        self.assertEqual(conf_energy(PointCloud(positions[:1],
                                                confidences=[0.5])), 0.25)
        self.assertEqual(conf_energy(PointCloud(positions,
                                                confidences=[0.25, 0.75])),
                         0.375)
        # maximal at c = 1/2
        self.assertEqual(conf_energy(PointCloud(np.zeros((8, 3)),
                                                confidences=np.full(8, .5))),
                         2.0)

    def test_area_energy(self):
        cloud = PointCloud(np.zeros((2, 3)), area_weights=[1, 1],
                           confidences=[1, 0.5])
        baseline = StageBaseline(np.ones(2), np.ones(2), 2.0)
        self.assertEqual(area_energy(cloud, baseline), 0.5)

        # zero at stage start
        self.assertEqual(area_energy(cloud, StageBaseline.capture(cloud)), 0)

        doubled = cloud.with_state(area_weights=[2, 2])
        self.assertEqual(area_energy(doubled, StageBaseline.capture(cloud)),
                         1.5)

    def test_baseline_is_frozen(self):
        baseline = StageBaseline.capture(random_cloud(5))
        with self.assertRaises(ValueError):
            baseline.a_baseline[0] = 3

    def test_surface_term(self):
        self.assertAlmostEqual(_surface_term([0.4, 0.7]), 0.025)
        self.assertEqual(_surface_term([0.5, 0.5, 0.5]), 0)
        self.assertEqual(_surface_term([1.0]), 0.25)

    def test_surface_energy(self):
        # a lone point does not see itself, so w = 0 there
        single = PointCloud([[0.5, 0.5, 0.5]], [[0, 0, 1]])
        self.assertEqual(surface_energy(single), 0.25)

        cloud = random_cloud(30, seed=1)
        mask = np.ones(30, dtype=bool)
        self.assertAlmostEqual(
            surface_energy(cloud, high_confidence=mask),
            surface_energy(cloud, WindingEvaluator(cloud, beta=0),
                           high_confidence=mask), places=12)

        with self.assertRaises(EmptyHighConfidenceSet):
            surface_energy(cloud, tau_in=1.0)

    def test_dirichlet_energy(self):
        single = PointCloud([[0.5, 0.5, 0.5]], [[0, 0, 1]])
        grid = build_grid(single.with_state(confidences=[0.0]),
                          OptimConfig(grid_resolution=16))
        self.assertGreater(dirichlet_energy(single, grid), 0)
        self.assertEqual(dirichlet_energy(
            single.with_state(confidences=[0.0]), grid), 0)

        cloud = random_cloud(40, seed=2)
        grid = anchored_grid(cloud)
        energy = dirichlet_energy(cloud, grid)
        self.assertGreater(energy, 0)

        flipped = cloud.with_state(normals=-cloud.normals)
        self.assertAlmostEqual(dirichlet_energy(flipped, grid) / energy, 1,
                               places=12)

        evaluator = WindingEvaluator(cloud, beta=0)
        self.assertAlmostEqual(dirichlet_energy(cloud, grid, evaluator) /
                               energy, 1, places=12)

        with self.assertRaises(StaleTree):
            dirichlet_energy(flipped, grid, evaluator)


class ObjectiveTests(TestCase):
    def setUp(self):
        self.cloud = random_cloud(50, seed=3)
        self.grid = anchored_grid(self.cloud)
        self.baseline = shifted_baseline(self.cloud)
        self.cfg = OptimConfig()

    def test_area_components(self):
        l1, l2 = self.cfg.lambda1, self.cfg.lambda2
        out = objective_area(self.cloud, self.grid, self.baseline, l1, l2)

        mask = self.grid.high_confidence
        self.assertAlmostEqual(out.e_diri / dirichlet_energy(self.cloud,
                                                             self.grid), 1,
                               places=10)
        self.assertAlmostEqual(out.e_surf, surface_energy(
            self.cloud, high_confidence=mask), places=10)
        self.assertEqual(out.e_area, area_energy(self.cloud, self.baseline))
        npt.assert_allclose(out.total,
                            out.e_diri + l1 * out.e_surf + l2 * out.e_area,
                            rtol=1e-12)

        alone = objective_area(self.cloud, self.grid, self.baseline, 0, 0)
        self.assertEqual(alone.total, alone.e_diri)

    def test_conf_components(self):
        l3, l4, l5 = self.cfg.lambda3, self.cfg.lambda4, self.cfg.lambda5
        out = objective_conf(self.cloud, self.grid, self.baseline, l3, l4, l5)

        npt.assert_allclose(out.total,
                            out.e_diri + l3 * out.e_surf + l4 * out.e_area +
                            l5 * out.e_conf, rtol=1e-12)
        self.assertEqual(out.e_conf, conf_energy(self.cloud))

        binary = self.cloud.with_state(
            confidences=(self.cloud.confidences > 0.5).astype(float))
        self.assertEqual(objective_conf(binary, self.grid, self.baseline,
                                        l3, l4, l5).e_conf, 0)

    def test_zero_field(self):
        cloud = self.cloud.with_state(confidences=np.zeros(50))
        grid = build_grid(cloud, GRID, np.ones(50, dtype=bool))
        baseline = StageBaseline.capture(cloud)

        out = objective_area(cloud, grid, baseline, 5.0, 1.0)
        self.assertEqual(out.e_diri, 0)
        self.assertEqual(out.total, 5.0 * 0.25)

        npt.assert_equal(grad_area(cloud, grid, baseline, 5.0, 1.0),
                         np.zeros(50))

    def test_single_point_area_gradient(self):
        cloud = PointCloud([[0.5, 0.5, 0.5]], [[0, 0, 1]], [2.0], [0.5])
        grid = build_grid(cloud, GRID, np.ones(1, dtype=bool))
        # lambda1 = 0 leaves only the Dirichlet and area terms
        model = EnergyModel(cloud, grid)
        diri_only = model.evaluate(cloud, StageBaseline.capture(cloud),
                                   AREA, (0.0, 0.0))[1]

        below = StageBaseline(np.array([1.0]), np.array([0.5]), 0.5)
        above = StageBaseline(np.array([4.0]), np.array([0.5]), 2.0)
        for baseline, sign in ((below, 1.0), (above, -1.0)):
            grad = grad_area(cloud, grid, baseline, 0.0, 3.0, model=model)
            npt.assert_allclose(grad - diri_only, [sign * 3.0 * 0.5])

    def test_json(self):
        out = objective_area(self.cloud, self.grid, self.baseline, 1, 1)
        values = json.loads(out.to_json())
        self.assertEqual(set(values), {'e_diri', 'e_surf', 'e_area',
                                       'e_conf', 'total'})

    def test_stale_model(self):
        model = EnergyModel(self.cloud, self.grid)
        flipped = self.cloud.with_state(normals=-self.cloud.normals)
        with self.assertRaises(StaleTree):
            model.evaluate(flipped, self.baseline, AREA, (1, 1))

        with self.assertRaisesRegex(ValueError, 'Unknown stage'):
            model.evaluate(self.cloud, self.baseline, 'normals', (1, 1))


class GradientTests(TestCase):
    """Analytic gradients against central finite differences

    Every objective is quadratic in the effective weights away from the
    kink of E_area, so central differences are exact up to rounding.
    """
    step = 1e-3

    def check(self, cloud, grid, baseline, stage, lambdas, model=None):
        model = EnergyModel(cloud, grid) if model is None else model
        _, grad = model.evaluate(cloud, baseline, stage, lambdas)

        name = 'area_weights' if stage == AREA else 'confidences'
        values = getattr(cloud, name)
        fd = np.empty(len(cloud))
        for i in range(len(cloud)):
            totals = []
            for sign in (1, -1):
                changed = np.array(values)
                changed[i] += sign * self.step
                totals.append(model.evaluate(
                    cloud.with_state(**{name: changed}), baseline, stage,
                    lambdas, gradient=False).total)
            fd[i] = (totals[0] - totals[1]) / (2 * self.step)

        scale = np.abs(fd).max()
        npt.assert_allclose(grad, fd, rtol=1e-4, atol=1e-8 * scale)

    def test_area_gradient(self):
        cfg = OptimConfig()
        for seed in range(10):
            cloud = random_cloud(50, seed=seed)
            grid = anchored_grid(cloud)
            self.check(cloud, grid, shifted_baseline(cloud), AREA,
                       (cfg.lambda1, cfg.lambda2))

    def test_conf_gradient(self):
        cfg = OptimConfig()
        for seed in range(10):
            cloud = random_cloud(50, seed=seed + 10)
            grid = anchored_grid(cloud)
            self.check(cloud, grid, shifted_baseline(cloud, 1.5), CONF,
                       (cfg.lambda3, cfg.lambda4, cfg.lambda5))

    def test_wrappers_match_model(self):
        cloud = random_cloud(50, seed=20)
        grid = anchored_grid(cloud)
        baseline = shifted_baseline(cloud)
        model = EnergyModel(cloud, grid)

        npt.assert_array_equal(grad_area(cloud, grid, baseline, 5, 1),
                               model.evaluate(cloud, baseline, AREA,
                                              (5, 1))[1])
        npt.assert_array_equal(grad_conf(cloud, grid, baseline, 1, .5, .01),
                               model.evaluate(cloud, baseline, CONF,
                                              (1, .5, .01))[1])

    def test_tree_path_matches_dense(self):
        cloud = random_cloud(50, seed=21)
        grid = anchored_grid(cloud)
        baseline = shifted_baseline(cloud)

        dense = EnergyModel(cloud, grid)
        tree = EnergyModel(cloud, grid, beta=0, dense_pair_limit=0)
        self.assertTrue(dense.dense)
        self.assertFalse(tree.dense)

        for stage, lambdas in ((AREA, (5, 1)), (CONF, (1, .5, .01))):
            expected, expected_grad = dense.evaluate(cloud, baseline, stage,
                                                     lambdas)
            out, grad = tree.evaluate(cloud, baseline, stage, lambdas)
            self.assertAlmostEqual(out.total / expected.total, 1, places=10)
            npt.assert_allclose(grad, expected_grad, rtol=1e-8,
                                atol=1e-10 * np.abs(expected_grad).max())

        # the far field approximation keeps the gradient close
        approx = EnergyModel(cloud, grid, beta=2.0, dense_pair_limit=0)
        _, grad = approx.evaluate(cloud, baseline, AREA, (5, 1))
        _, expected_grad = dense.evaluate(cloud, baseline, AREA, (5, 1))
        self.assertLess(np.linalg.norm(grad - expected_grad),
                        0.25 * np.linalg.norm(expected_grad))


if __name__ == '__main__':
    main()
