import os
import tempfile

from dataclasses import replace

import numpy as np
import numpy.testing as npt

from unittest import main, TestCase

from diwr.exceptions import DegenerateExtent, ParseError, TooFewPoints
from diwr.fixtures import fibonacci_sphere, random_cloud
from diwr.pcio import (PointCloud, TriMesh, load_mesh, load_points,
                       normalize_unit_cube, denormalize_points, save_mesh,
                       save_points)


class PointCloudTests(TestCase):
    def test_defaults(self):
        cloud = PointCloud(np.zeros((5, 3)))

        npt.assert_equal(cloud.normals, np.zeros((5, 3)))
        npt.assert_equal(cloud.area_weights, np.ones(5))
        npt.assert_equal(cloud.confidences, np.ones(5))
        npt.assert_equal(cloud.densities, np.zeros(5))
        self.assertEqual(len(cloud), 5)
        self.assertIsNone(cloud.scale_record)

    def test_read_only(self):
        cloud = PointCloud(np.zeros((5, 3)))
        with self.assertRaises(ValueError):
            cloud.confidences[0] = 0.5

    def test_bad_shapes(self):
        with self.assertRaisesRegex(ValueError, 'positions must be'):
            PointCloud(np.zeros((5, 2)))
        with self.assertRaisesRegex(ValueError, 'area_weights has shape'):
            PointCloud(np.zeros((5, 3)), area_weights=np.ones(4))

    def test_with_state_generation(self):
        cloud = PointCloud(np.zeros((4, 3)))
        self.assertEqual(cloud.generation, 0)

        updated = cloud.with_state(confidences=np.zeros(4))
        self.assertEqual(updated.generation, 1)
        npt.assert_equal(updated.confidences, np.zeros(4))
        # the original is untouched
        npt.assert_equal(cloud.confidences, np.ones(4))

        # densities are not part of theta
        self.assertEqual(cloud.with_state(densities=np.ones(4)).generation, 0)

    def test_effective_weights_and_subset(self):
        cloud = random_cloud(10, seed=3)
        npt.assert_allclose(cloud.effective_weights,
                            cloud.area_weights * cloud.confidences)

        part = cloud.subset([1, 4])
        npt.assert_equal(part.positions, cloud.positions[[1, 4]])
        npt.assert_equal(part.confidences, cloud.confidences[[1, 4]])

    def test_validate(self):
        fibonacci_sphere(50).cloud.validate()

        with self.assertRaisesRegex(ValueError, 'not unit length'):
            PointCloud(np.zeros((4, 3))).validate()
        with self.assertRaisesRegex(ValueError, 'Confidences'):
            PointCloud(np.zeros((4, 3)),
                       confidences=[0, 1, 2, 0]).validate(False)


class LoadPointsTests(TestCase):
    def setUp(self):
        self.data_dir = os.path.join(os.path.dirname(__file__), 'data')

    def test_xyz(self):
        cloud = load_points(os.path.join(self.data_dir, 'cube_corners.xyz'))

        self.assertEqual(len(cloud), 8)
        npt.assert_equal(cloud.positions[1], [2, 0, 0])
        npt.assert_equal(cloud.normals, np.zeros((8, 3)))
        npt.assert_equal(cloud.confidences, np.ones(8))

    def test_missing(self):
        with self.assertRaises(FileNotFoundError):
            load_points(os.path.join(self.data_dir, 'does-not-exist.xyz'))

    def test_malformed_value(self):
        with self.assertRaises(ParseError) as context:
            load_points(os.path.join(self.data_dir, 'malformed.xyz'))

        self.assertEqual(context.exception.line, 3)
        self.assertEqual(context.exception.offset, 4)
        self.assertIn('malformed.xyz', str(context.exception))

    def test_wrong_columns(self):
        with self.assertRaises(ParseError) as context:
            load_points(os.path.join(self.data_dir, 'wrong_columns.xyz'))
        self.assertEqual(context.exception.line, 2)

    def test_too_few(self):
        with self.assertRaises(TooFewPoints):
            load_points(os.path.join(self.data_dir, 'three_points.xyz'))

    def test_unknown_extension(self):
        with tempfile.NamedTemporaryFile(suffix='.abc') as f:
            with self.assertRaisesRegex(ValueError, 'Cannot infer'):
                load_points(f.name)

    def test_obj_vertices(self):
        cloud = load_points(os.path.join(self.data_dir, 'tetrahedron.obj'))
        self.assertEqual(len(cloud), 4)
        npt.assert_equal(cloud.positions[3], [0, 0, 1])

    def test_ply_state_round_trip(self):
        cloud = random_cloud(20, seed=7).with_state(
            densities=np.arange(20))

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'state.ply')
            save_points(path, cloud)

            plain = load_points(path)
            npt.assert_equal(plain.normals, np.zeros((20, 3)))
            npt.assert_equal(plain.confidences, np.ones(20))

            restored = load_points(path, with_state=True)
            npt.assert_equal(restored.positions, cloud.positions)
            npt.assert_equal(restored.normals, cloud.normals)
            npt.assert_equal(restored.area_weights, cloud.area_weights)
            npt.assert_equal(restored.confidences, cloud.confidences)
            npt.assert_equal(restored.densities, cloud.densities)

    def test_xyz_positions_exact(self):
        cloud = random_cloud(12, seed=2)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'points.xyz')
            save_points(path, cloud)
            npt.assert_equal(load_points(path).positions, cloud.positions)


class NormalizeTests(TestCase):
    def test_longest_side(self):
        cloud = PointCloud([[1, 1, 1], [3, 1, 1], [1, 2, 1], [1, 1, 1.5]])
        normalized = normalize_unit_cube(cloud)

        npt.assert_allclose(normalized.positions.min(axis=0), [0, 0, 0])
        npt.assert_allclose(normalized.positions.max(axis=0), [1, 0.5, 0.25])
        self.assertEqual(normalized.scale_record.scale, 0.5)

        npt.assert_allclose(denormalize_points(normalized.positions,
                                               normalized.scale_record),
                            cloud.positions)

    def test_already_normalized(self):
        positions = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
        normalized = normalize_unit_cube(PointCloud(positions))
        npt.assert_equal(normalized.positions, positions)

    def test_renormalizing_keeps_the_record(self):
        cloud = PointCloud([[1, 1, 1], [3, 1, 1], [1, 2, 1], [1, 1, 1.5]])
        normalized = normalize_unit_cube(cloud)
        # a one-ulp drift, as left by a save and reload
        drifted = replace(normalized,
                          positions=np.nextafter(normalized.positions, 2))

        again = normalize_unit_cube(drifted)
        npt.assert_equal(again.positions, drifted.positions)
        self.assertIs(again.scale_record, normalized.scale_record)
        npt.assert_allclose(denormalize_points(again.positions,
                                               again.scale_record),
                            cloud.positions)

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'normalized.ply')
            save_points(path, normalized)
            reloaded = replace(load_points(path),
                               scale_record=normalized.scale_record)
        self.assertIs(normalize_unit_cube(reloaded).scale_record,
                      normalized.scale_record)

    def test_degenerate(self):
        with self.assertRaises(DegenerateExtent):
            normalize_unit_cube(PointCloud(np.ones((6, 3))))


class TriMeshTests(TestCase):
    def setUp(self):
        self.data_dir = os.path.join(os.path.dirname(__file__), 'data')

    def test_tetrahedron(self):
        mesh = load_mesh(os.path.join(self.data_dir, 'tetrahedron.obj'))

        self.assertEqual(len(mesh.faces), 4)
        self.assertTrue(mesh.is_watertight())
        self.assertEqual(mesh.euler_characteristic, 2)
        self.assertAlmostEqual(mesh.volume, 1.0 / 6.0)

    def test_open_mesh(self):
        mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        self.assertEqual(mesh.boundary_and_nonmanifold_edges(), (3, 0))
        self.assertFalse(mesh.is_watertight())

    def test_bad_faces(self):
        with self.assertRaisesRegex(ValueError, 'Face indices'):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])

    def test_save_and_load(self):
        mesh = load_mesh(os.path.join(self.data_dir, 'tetrahedron.obj'))

        with tempfile.TemporaryDirectory() as tmp:
            for name in ('copy.obj', 'copy.ply'):
                path = os.path.join(tmp, name)
                save_mesh(path, mesh)
                loaded = load_mesh(path)
                npt.assert_allclose(loaded.vertices, mesh.vertices)
                npt.assert_equal(loaded.faces, mesh.faces)

            with self.assertRaisesRegex(ValueError, 'obj or ply'):
                save_mesh(os.path.join(tmp, 'copy.stl'), mesh)


if __name__ == '__main__':
    main()
