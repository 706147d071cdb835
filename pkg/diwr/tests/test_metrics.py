import os
import shutil
import tempfile

import numpy as np
import numpy.testing as npt
import pandas as pd

from unittest import main, TestCase

from diwr.exceptions import EmptyInput, TooFewPoints
from diwr.fixtures import fibonacci_sphere, periodic_lattice, plane_patch
from diwr.metrics import (QualityReport, chamfer, difficulty_regime,
                          evaluate_directory, evaluate_mesh, is_severe,
                          normal_consistency, orientation_error,
                          quality_measures)
from diwr.pcio import PointCloud, TriMesh, load_mesh, save_mesh


def report(sigma_hat, u_hat, o_hat):
    return QualityReport(0.01, sigma_hat, u_hat, o_hat, 20, 10.0)


class QualityTests(TestCase):
    def test_plane(self):
        out = quality_measures(plane_patch().cloud)

        self.assertAlmostEqual(out.sigma_hat, 0, places=10)
        self.assertGreater(out.s_hat, 0.05)
        self.assertEqual(out.k, 20)

    def test_periodic_lattice(self):
        out = quality_measures(periodic_lattice(0.125).cloud, boxsize=1.0)

        self.assertAlmostEqual(out.u_hat, 0, places=9)
        self.assertEqual(out.o_hat, 0)
        self.assertGreater(out.s_hat, 0.125)

    def test_noise_raises_sigma(self):
        cloud = fibonacci_sphere(3000, 0.4, (0.5, 0.5, 0.5)).cloud
        rng = np.random.default_rng(0)
        noisy = PointCloud(cloud.positions +
                           rng.normal(scale=0.005, size=(3000, 3)))

        clean = quality_measures(cloud)
        self.assertGreater(quality_measures(noisy).sigma_hat,
                           2 * clean.sigma_hat)

    def test_far_points_raise_o_hat(self):
        cloud = fibonacci_sphere(3000, 0.3, (0.5, 0.5, 0.5)).cloud
        rng = np.random.default_rng(1)
        far = rng.uniform(0, 1, size=(300, 3))
        far = far[np.abs(np.linalg.norm(far - 0.5, axis=1) - 0.3) > 0.1]
        out = quality_measures(np.concatenate([cloud.positions, far]))

        self.assertGreater(out.o_hat, quality_measures(cloud).o_hat)

    def test_arguments(self):
        cloud = plane_patch(side=4).cloud
        with self.assertRaises(TooFewPoints):
            quality_measures(cloud, k=20)
        with self.assertRaisesRegex(ValueError, 'k must be'):
            quality_measures(plane_patch().cloud, k=5)
        with self.assertRaisesRegex(ValueError, 'trim_tau'):
            quality_measures(plane_patch().cloud, trim_tau=50)

    def test_json(self):
        out = report(0.001, 0.2, 0.01)
        self.assertEqual(out.to_dict()['u_hat'], 0.2)
        self.assertIn('"sigma_hat": 0.001', out.to_json())


class RegimeTests(TestCase):
    def test_regimes(self):
        self.assertEqual(difficulty_regime(report(0.001, 0.2, 0.05)), 'easy')
        self.assertEqual(difficulty_regime(report(0.003, 0.2, 0.05)),
                         'moderate')
        self.assertEqual(difficulty_regime(report(0.001, 0.7, 0.05)),
                         'difficult')
        self.assertEqual(difficulty_regime(report(0.001, 0.2, 0.17)),
                         'difficult')
        # the limits themselves are still easy
        self.assertEqual(difficulty_regime(report(0.002, 0.3, 0.08)), 'easy')

    def test_severity(self):
        self.assertFalse(is_severe(report(0.001, 0.2, 0.05)))
        self.assertTrue(is_severe(report(0.003, 0.2, 0.05)))


class DistanceTests(TestCase):
    def setUp(self):
        data_dir = os.path.join(os.path.dirname(__file__), 'data')
        self.mesh_path = os.path.join(data_dir, 'tetrahedron.obj')
        self.mesh = load_mesh(self.mesh_path)

    def test_chamfer_points(self):
        a = np.array([[0.0, 0, 0]])
        b = np.array([[1.0, 0, 0]])
        self.assertAlmostEqual(chamfer(a, b), 1000)
        self.assertEqual(chamfer(a, a), 0)

        two = np.array([[0.0, 0, 0], [0, 0, 0.002]])
        self.assertAlmostEqual(chamfer(a, two), 0.5 * (0 + 1.0))

    def test_chamfer_meshes(self):
        shifted = TriMesh(self.mesh.vertices + [0.1, 0, 0], self.mesh.faces)

        same = chamfer(self.mesh, self.mesh, 20000)
        moved = chamfer(self.mesh, shifted, 20000)
        self.assertLess(same, 10)
        self.assertGreater(moved, same)

    def test_normal_consistency(self):
        self.assertGreater(normal_consistency(self.mesh, self.mesh, 20000),
                           0.9)

        sphere = fibonacci_sphere(500).cloud
        self.assertAlmostEqual(normal_consistency(sphere, sphere), 1.0)
        flipped = sphere.with_state(normals=-sphere.normals)
        self.assertAlmostEqual(normal_consistency(sphere, flipped), 1.0)

        with self.assertRaisesRegex(EmptyInput, 'normals'):
            normal_consistency(sphere.positions, sphere)

    def test_empty(self):
        with self.assertRaises(EmptyInput):
            chamfer(np.empty((0, 3)), self.mesh)
        with self.assertRaises(EmptyInput):
            chamfer(TriMesh(np.zeros((3, 3)), [[0, 1, 2]]), self.mesh)

    def test_evaluate_mesh(self):
        out = evaluate_mesh(self.mesh, self.mesh, 5000)
        self.assertEqual(set(out), {'chamfer', 'normal_consistency'})


class OrientationErrorTests(TestCase):
    def test_values(self):
        normals = fibonacci_sphere(100).normals
        npt.assert_allclose(orientation_error(normals, normals), (0, 0),
                            atol=1e-5)
        npt.assert_allclose(orientation_error(-normals, normals), (180, 1))

        half = normals.copy()
        half[:50] *= -1
        self.assertAlmostEqual(orientation_error(half, normals)[1], 0.5)

    def test_shapes(self):
        with self.assertRaisesRegex(ValueError, 'cannot be compared'):
            orientation_error(np.zeros((3, 3)), np.zeros((4, 3)))


class EvaluateDirectoryTests(TestCase):
    def setUp(self):
        data_dir = os.path.join(os.path.dirname(__file__), 'data')
        self.reference = os.path.join(data_dir, 'tetrahedron.obj')
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_batch(self):
        mesh = load_mesh(self.reference)
        save_mesh(os.path.join(self.tmp, 'b.ply'), mesh)
        # an open surface, one face only
        save_mesh(os.path.join(self.tmp, 'a.obj'),
                  TriMesh(mesh.vertices, mesh.faces[:1]))
        output = os.path.join(self.tmp, 'results.csv')

        results = evaluate_directory(self.tmp, self.reference, 2000,
                                     output=output)

        self.assertEqual(list(results['mesh']), ['a.obj', 'b.ply'])
        self.assertEqual(list(results['watertight']), [False, True])
        self.assertLess(results['chamfer'][1], results['chamfer'][0])
        pd.testing.assert_frame_equal(pd.read_csv(output), results)

    def test_empty_directory(self):
        with self.assertRaisesRegex(EmptyInput, 'No .obj or .ply'):
            evaluate_directory(self.tmp, self.reference)


if __name__ == '__main__':
    main()
