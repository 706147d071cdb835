import json
import os

from dataclasses import asdict, dataclass
from glob import glob

import numpy as np
import pandas as pd
import trimesh

from scipy.spatial import cKDTree

from diwr.exceptions import EmptyInput, TooFewPoints
from diwr.parallel import get_threads
from diwr.pcio import PointCloud, TriMesh, load_mesh

DEFAULT_K = 20
DEFAULT_TRIM = 10
DEFAULT_SAMPLES = 100_000

# upper bounds of the easy regime, and lower bounds of the difficult one
EASY_LIMITS = {'sigma_hat': 0.002, 'u_hat': 0.3, 'o_hat': 0.08}
DIFFICULT_LIMITS = {'sigma_hat': 0.005, 'u_hat': 0.7, 'o_hat': 0.17}


@dataclass(frozen=True)
class QualityReport:
    """Input quality measures of a normalized point cloud

    Attributes
    ----------
    s_hat: float
        Median of the mean k-nearest-neighbour distances.
    sigma_hat: float
        Median RMS distance of the neighbours to their best-fit plane.
    u_hat: float
        Trimmed coefficient of variation of the local spacings.
    o_hat: float
        Fraction of points whose spacing exceeds the mean by two standard
        deviations.
    k: int
        Neighbour count.
    trim_tau: float
        Percentage discarded at each end before computing u_hat.
    """
    s_hat: float
    sigma_hat: float
    u_hat: float
    o_hat: float
    k: int
    trim_tau: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def _positions(points):
    if isinstance(points, PointCloud):
        return points.positions
    return np.asarray(points, dtype=float).reshape(-1, 3)


def quality_measures(cloud, k=DEFAULT_K, trim_tau=DEFAULT_TRIM, boxsize=None,
                     chunk_size=16384):
    """Noise, non-uniformity and outlier measures of a point cloud

    Parameters
    ----------
    cloud: PointCloud or np.ndarray
        Points normalized to the unit cube.
    k: int
        Neighbour count, in [10, 40].
    trim_tau: float
        Percentage trimmed at both ends of the sorted spacings.
    boxsize: float, optional
        Treat the points as periodic in [0, boxsize)^3; used to measure
        lattices without boundary effects.
    chunk_size: int
        Points per vectorized plane-fit batch.

    Returns
    -------
    QualityReport

    Raises
    ------
    TooFewPoints
        If there are no more points than k.
    ValueError
        If k or trim_tau are out of range.
    """
    positions = _positions(cloud)
    n = len(positions)
    if not 10 <= k <= 40:
        raise ValueError('k must be in [10, 40], got %d' % k)
    if not 0 <= trim_tau < 50:
        raise ValueError('trim_tau must be in [0, 50), got %g' % trim_tau)
    if n <= k:
        raise TooFewPoints('%d points are not enough for %d neighbours'
                           % (n, k))

    tree = cKDTree(positions, boxsize=boxsize)
    distances, neighbours = tree.query(positions, k=k + 1,
                                       workers=get_threads())
    distances, neighbours = distances[:, 1:], neighbours[:, 1:]
    spacing = distances.mean(axis=1)

    residual = np.empty(n)
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        local = positions[neighbours[start:stop]] - \
            positions[start:stop, None, :]
        if boxsize is not None:
            local -= boxsize * np.round(local / boxsize)
        centered = local - local.mean(axis=1)[:, None, :]
        covariance = np.einsum('ijk,ijl->ikl', centered, centered)
        _, vectors = np.linalg.eigh(covariance)
        heights = np.einsum('ijk,ik->ij', centered, vectors[:, :, 0])
        residual[start:stop] = np.sqrt(np.mean(heights ** 2, axis=1))

    ordered = np.sort(spacing)
    cut = int(np.floor(n * trim_tau / 100.0))
    trimmed = ordered[cut:n - cut] if n - 2 * cut > 1 else ordered
    mean = trimmed.mean()
    u_hat = float(trimmed.std(ddof=1) / mean) if mean > 0 else 0.0

    mu, sd = spacing.mean(), spacing.std()
    # equal spacings may differ in the last ulp, which must not count
    threshold = mu + 2.0 * sd + 1e-9 * mu
    o_hat = float(np.mean(spacing > threshold))

    return QualityReport(float(np.median(spacing)), float(np.median(residual)),
                         u_hat, o_hat, int(k), float(trim_tau))


def difficulty_regime(report):
    """'easy', 'moderate' or 'difficult' from the quality measures"""
    values = report.to_dict()
    if any(values[name] >= limit for name, limit in DIFFICULT_LIMITS.items()):
        return 'difficult'
    if all(values[name] <= limit for name, limit in EASY_LIMITS.items()):
        return 'easy'
    return 'moderate'


def is_severe(report):
    """True when the input is outside the easy regime"""
    return difficulty_regime(report) != 'easy'


def _samples(geometry, count, seed):
    """Points and (possibly None) normals representing a surface"""
    if isinstance(geometry, TriMesh):
        geometry = geometry.to_trimesh()
    if isinstance(geometry, trimesh.Trimesh):
        if not len(geometry.faces) or geometry.area <= 0:
            raise EmptyInput('Cannot sample a mesh without area')
        points, faces = trimesh.sample.sample_surface(geometry, count,
                                                      seed=seed)
        return np.asarray(points), np.asarray(geometry.face_normals[faces])

    if isinstance(geometry, PointCloud):
        points, normals = geometry.positions, geometry.normals
    else:
        points, normals = _positions(geometry), None
    if not len(points):
        raise EmptyInput('Cannot compare an empty point set')
    return points, normals


def chamfer(a, b, sample_count=DEFAULT_SAMPLES, seed=0):
    """Symmetric mean nearest-neighbour distance, multiplied by 1000

    Parameters
    ----------
    a, b: TriMesh, trimesh.Trimesh, PointCloud or np.ndarray
        Meshes are sampled uniformly by area, point sets are used as given.
    sample_count: int
        Samples drawn from each mesh.
    seed: int
        Sampling seed.

    Returns
    -------
    float

    Raises
    ------
    EmptyInput
        If either input has no points or no area.
    """
    points_a, _ = _samples(a, sample_count, seed)
    points_b, _ = _samples(b, sample_count, seed + 1)
    threads = get_threads()
    to_b, _ = cKDTree(points_b).query(points_a, workers=threads)
    to_a, _ = cKDTree(points_a).query(points_b, workers=threads)
    return 1e3 * 0.5 * (float(np.mean(to_b)) + float(np.mean(to_a)))


def normal_consistency(a, b, sample_count=DEFAULT_SAMPLES, seed=0):
    """Symmetric mean |cos| between normals at nearest samples

    Point sets must carry normals (PointCloud); meshes use face normals.

    Raises
    ------
    EmptyInput
        If either input is empty or a point set has no normals.
    """
    points_a, normals_a = _samples(a, sample_count, seed)
    points_b, normals_b = _samples(b, sample_count, seed + 1)
    if normals_a is None or normals_b is None:
        raise EmptyInput('Normal consistency needs normals on both inputs')

    threads = get_threads()
    _, near_b = cKDTree(points_b).query(points_a, workers=threads)
    _, near_a = cKDTree(points_a).query(points_b, workers=threads)
    ab = np.abs(np.einsum('ij,ij->i', normals_a, normals_b[near_b]))
    ba = np.abs(np.einsum('ij,ij->i', normals_b, normals_a[near_a]))
    return 0.5 * (float(np.mean(ab)) + float(np.mean(ba)))


def orientation_error(normals, ground_truth_normals):
    """Mean angle (degrees) to the ground truth and the flipped fraction"""
    normals = np.asarray(normals, dtype=float)
    ground_truth_normals = np.asarray(ground_truth_normals, dtype=float)
    if normals.shape != ground_truth_normals.shape:
        raise ValueError('Normals of shape %r cannot be compared with %r'
                         % (normals.shape, ground_truth_normals.shape))

    cosine = np.einsum('ij,ij->i', normals, ground_truth_normals)
    angles = np.degrees(np.arccos(np.clip(cosine, -1, 1)))
    return float(np.mean(angles)), float(np.mean(cosine < 0))


def evaluate_mesh(mesh, reference, sample_count=DEFAULT_SAMPLES, seed=0):
    """Chamfer distance and normal consistency of a mesh to a reference"""
    return {'chamfer': chamfer(mesh, reference, sample_count, seed),
            'normal_consistency': normal_consistency(mesh, reference,
                                                     sample_count, seed)}


def evaluate_directory(directory, reference, sample_count=DEFAULT_SAMPLES,
                       seed=0, output=None):
    """Evaluate every .obj and .ply mesh of a directory against a reference

    Parameters
    ----------
    directory: str
        Directory with the meshes to evaluate.
    reference: str or TriMesh
        Reference mesh or its path.
    sample_count: int
        Samples drawn per mesh.
    seed: int
        Sampling seed.
    output: str, optional
        Where to write the results as CSV.

    Returns
    -------
    pd.DataFrame
        One row per mesh with columns mesh, chamfer, normal_consistency
        and watertight.

    Raises
    ------
    EmptyInput
        If the directory holds no mesh.
    """
    if isinstance(reference, str):
        reference = load_mesh(reference)

    paths = sorted(glob(os.path.join(directory, '*.obj')) +
                   glob(os.path.join(directory, '*.ply')))
    if not paths:
        raise EmptyInput('No .obj or .ply meshes found in %s' % directory)

    rows = []
    for path in paths:
        mesh = load_mesh(path)
        row = {'mesh': os.path.basename(path),
               'watertight': mesh.is_watertight()}
        row.update(evaluate_mesh(mesh, reference, sample_count, seed))
        rows.append(row)

    results = pd.DataFrame(rows, columns=['mesh', 'chamfer',
                                          'normal_consistency', 'watertight'])
    if output is not None:
        results.to_csv(output, index=False)
    return results
