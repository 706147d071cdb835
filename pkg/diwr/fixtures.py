"""Analytic shapes with known normals, areas and inside tests"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from diwr.pcio import PointCloud

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True, eq=False)
class Fixture:
    """A sampled shape together with its ground truth

    Attributes
    ----------
    name: str
        Shape name, used in manifests.
    cloud: PointCloud
        Samples with ground-truth normals and area weights.
    inside: callable or None
        Vectorized inside test over (m, 3) arrays, None for open shapes.
    surface_area: float
        Analytic surface area.
    volume: float
        Analytic enclosed volume, 0 for open shapes.
    """
    name: str
    cloud: PointCloud
    inside: Optional[Callable] = None
    surface_area: float = 0.0
    volume: float = 0.0

    @property
    def normals(self):
        return self.cloud.normals


def sphere_points(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Fibonacci lattice on a sphere, returns (points, outward normals)"""
    if n < 1:
        raise ValueError('At least one point is needed, got %d' % n)
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z * z, 0, None))
    theta = GOLDEN_ANGLE * i
    normals = np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    return np.asarray(center, dtype=float) + radius * normals, normals


def fibonacci_sphere(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Uniformly sampled sphere with exact area weights 4 pi r^2 / n

    Parameters
    ----------
    n: int
        Number of samples.
    radius: float
        Sphere radius.
    center: array_like
        Sphere center.

    Returns
    -------
    Fixture
    """
    points, normals = sphere_points(n, radius, center)
    area = 4.0 * np.pi * radius ** 2
    center = np.asarray(center, dtype=float)

    def inside(q):
        q = np.asarray(q, dtype=float).reshape(-1, 3)
        return np.linalg.norm(q - center, axis=1) < radius

    cloud = PointCloud(points, normals, np.full(n, area / n))
    return Fixture('sphere', cloud, inside, area,
                   4.0 / 3.0 * np.pi * radius ** 3)


def torus(n, major=0.3, minor=0.12, center=(0.5, 0.5, 0.5), seed=0):
    """Torus around the z axis sampled uniformly by area

    Samples are drawn by rejection on the parameter square so every point
    represents the same area, 4 pi^2 R r / n.
    """
    if minor >= major:
        raise ValueError('The minor radius (%g) must be smaller than the '
                         'major radius (%g)' % (minor, major))
    rng = np.random.default_rng(seed)
    u = np.empty(0)
    v = np.empty(0)
    while len(u) < n:
        cu = rng.uniform(0, 2 * np.pi, 2 * n)
        cv = rng.uniform(0, 2 * np.pi, 2 * n)
        keep = (rng.uniform(0, 1, 2 * n) <
                (major + minor * np.cos(cv)) / (major + minor))
        u = np.concatenate([u, cu[keep]])
        v = np.concatenate([v, cv[keep]])
    u, v = u[:n], v[:n]

    normals = np.column_stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u),
                               np.sin(v)])
    ring = np.column_stack([np.cos(u), np.sin(u), np.zeros(n)]) * major
    center = np.asarray(center, dtype=float)
    points = center + ring + minor * normals
    area = 4.0 * np.pi ** 2 * major * minor

    def inside(q):
        q = np.asarray(q, dtype=float).reshape(-1, 3) - center
        radial = np.hypot(q[:, 0], q[:, 1]) - major
        return radial ** 2 + q[:, 2] ** 2 < minor ** 2

    cloud = PointCloud(points, normals, np.full(n, area / n))
    return Fixture('torus', cloud, inside, area,
                   2.0 * np.pi ** 2 * major * minor ** 2)


def plane_patch(side=20, spacing=0.05, origin=(0.0, 0.0, 0.0)):
    """Square lattice in the z = 0 plane with cell-area weights"""
    ticks = np.arange(side) * spacing
    x, y = np.meshgrid(ticks, ticks, indexing='ij')
    points = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    points = points + np.asarray(origin, dtype=float)
    normals = np.tile([0.0, 0.0, 1.0], (len(points), 1))

    cloud = PointCloud(points, normals, np.full(len(points), spacing ** 2))
    return Fixture('plane', cloud, None, (side * spacing) ** 2, 0.0)


def periodic_lattice(spacing=0.125):
    """Cubic lattice filling [0, 1)^3, meant for toroidal neighbour queries

    Every point has the same neighbourhood once distances wrap around the
    unit box, so spacing statistics have zero dispersion.
    """
    count = int(round(1.0 / spacing))
    ticks = np.arange(count) * spacing
    grid = np.stack(np.meshgrid(ticks, ticks, ticks, indexing='ij'), axis=-1)
    return Fixture('lattice', PointCloud(grid.reshape(-1, 3)))


def random_cloud(n, seed=0, scale=1.0):
    """Random positions, unit normals and positive weights, for unit tests"""
    rng = np.random.default_rng(seed)
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    return PointCloud(rng.uniform(0, scale, size=(n, 3)), normals,
                      rng.uniform(0.5, 1.5, n) * scale ** 2 / n,
                      rng.uniform(0.05, 0.95, n))
