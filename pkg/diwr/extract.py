"""Surface extraction from the optimized winding field

The retained high-confidence points define w on a regular grid over the
box; the mesh is the iso-level 1/2 found by marching cubes.
"""
from dataclasses import dataclass, replace

import numpy as np
import trimesh

from scipy.spatial import cKDTree
from skimage.measure import marching_cubes

from diwr.config import OptimConfig
from diwr.exceptions import EmptyLevelSet, EmptyResult
from diwr.metrics import quality_measures
from diwr.optimizer import initialize, run_diwr
from diwr.parallel import get_threads
from diwr.pcio import TriMesh, normalize_unit_cube, save_points
from diwr.winding import POTENTIAL, WindingEvaluator, evaluate_dense

DEFAULT_ISO = 0.5


def retain_high_confidence(cloud, tau_in=0.9):
    """Keep the points with c_i >= tau_in

    Returns
    -------
    PointCloud
        Filtered cloud, every channel carried over.
    np.ndarray
        Indices of the retained points in `cloud`.

    Raises
    ------
    EmptyResult
        If no point reaches the threshold.
    """
    indices = np.flatnonzero(cloud.high_confidence(tau_in))
    if not len(indices):
        raise EmptyResult('No point has a confidence of at least %g, there '
                          'is nothing to reconstruct' % tau_in)
    return cloud.subset(indices), indices


def sample_field(cloud, resolution, box_min=-0.1, box_max=1.1,
                 beta=2.0, smoothing=0.0, near_radius=0.03):
    """Winding values on the nodes of a resolution^3 grid

    Nodes within `near_radius` of a point are evaluated without the far
    field approximation.

    Returns
    -------
    np.ndarray
        (resolution, resolution, resolution) field values.
    float
        Node spacing.
    """
    ticks = np.linspace(box_min, box_max, resolution)
    spacing = ticks[1] - ticks[0]
    nodes = np.stack(np.meshgrid(ticks, ticks, ticks, indexing='ij'),
                     axis=-1).reshape(-1, 3)

    evaluator = WindingEvaluator(cloud, beta=beta, eps=smoothing)
    values = evaluator.winding(nodes)

    if beta > 0 and near_radius > 0:
        distance, _ = cKDTree(cloud.positions).query(
            nodes, distance_upper_bound=near_radius, workers=get_threads())
        near = np.flatnonzero(distance <= near_radius)
        if len(near):
            moments = cloud.effective_weights[:, None] * cloud.normals
            values[near] = evaluate_dense(POTENTIAL, cloud.positions,
                                          moments, nodes[near], smoothing)

    return values.reshape((resolution, ) * 3), spacing


def extract_isosurface(cloud, resolution=128, iso=DEFAULT_ISO, beta=2.0,
                       smoothing=0.5, keep_largest=True, box_margin=0.1):
    """Marching cubes over the winding field of a (filtered) cloud

    Parameters
    ----------
    cloud: PointCloud
        Normalized cloud, usually the retained high-confidence points.
    resolution: int
        Grid nodes per axis, at least 32.
    iso: float
        Level to extract.
    beta: float
        Far-field ratio.
    smoothing: float
        Kernel smoothing width in node spacings; keeps the field finite at
        nodes next to points.
    keep_largest: bool
        Keep only the connected component with the most faces.
    box_margin: float
        The grid spans the unit cube grown by this margin.

    Returns
    -------
    TriMesh
        Mesh in the normalized frame, with every vertex inside the box.

    Raises
    ------
    ValueError
        If the resolution is smaller than 32.
    EmptyLevelSet
        If the field never crosses `iso`.
    """
    if resolution < 32:
        raise ValueError('The extraction resolution must be at least 32, got'
                         ' %d' % resolution)

    box_min, box_max = -box_margin, 1.0 + box_margin
    spacing = (box_max - box_min) / (resolution - 1)
    field, spacing = sample_field(cloud, resolution, box_min, box_max, beta,
                                  smoothing * spacing, near_radius=spacing)

    # a border of empty space closes surfaces that touch the box
    padded = np.pad(field, 1, mode='constant', constant_values=0.0)
    if not (padded.min() < iso < padded.max()):
        raise EmptyLevelSet('The field ranges over [%g, %g] and never '
                            'crosses %g' % (padded.min(), padded.max(), iso))

    direction = 'descent' if iso > 0 else 'ascent'
    vertices, faces, _, _ = marching_cubes(padded, level=iso,
                                           spacing=(spacing, ) * 3,
                                           gradient_direction=direction)
    # vertices in the padding are pulled back onto the box
    vertices = np.clip(vertices + (box_min - spacing), box_min, box_max)

    mesh = trimesh.Trimesh(vertices=vertices, faces=faces, process=True)
    if keep_largest:
        components = mesh.split(only_watertight=False)
        if len(components) > 1:
            mesh = max(components, key=lambda part: len(part.faces))

    return TriMesh.from_trimesh(mesh)


def export_oriented_points(path, cloud, denormalize=True):
    """Write oriented points with a "weight" property a_i c_i

    The file is meant for external screened Poisson solvers. Positions are
    mapped back to the input frame when the cloud carries a scale record.
    """
    if denormalize and cloud.scale_record is not None:
        cloud = replace(cloud,
                        positions=cloud.scale_record.inverse(cloud.positions),
                        scale_record=None)
    save_points(path, cloud, format='ply',
                extra={'weight': cloud.effective_weights})


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Everything `reconstruct_surface` produces

    Attributes
    ----------
    mesh: TriMesh
        Mesh in the input frame.
    cloud: PointCloud
        Optimized, normalized cloud.
    retained: PointCloud
        High-confidence subset used for extraction.
    state: OptimizerState
        Optimization log and histories.
    quality: QualityReport or None
        Measures of the normalized input.
    """
    mesh: TriMesh
    cloud: object
    retained: object
    state: object
    quality: object = None


def reconstruct_surface(cloud, cfg=None, reference_normals=None,
                        log_path=None, checkpoint_dir=None, verbose=False):
    """Normalize, initialize, optimize and extract

    Parameters
    ----------
    cloud: PointCloud
        Raw cloud in world units.
    cfg: OptimConfig, optional
        Settings.
    reference_normals: np.ndarray, optional
        Ground truth for the orientation error trace.
    log_path: str, optional
        JSON lines log destination.
    checkpoint_dir: str, optional
        Directory for per-iteration PLY checkpoints.
    verbose: bool
        Print progress.

    Returns
    -------
    Reconstruction

    Raises
    ------
    EmptyResult, EmptyLevelSet
        If nothing can be extracted.
    """
    cfg = (OptimConfig() if cfg is None else cfg).validate()
    normalized = normalize_unit_cube(cloud)

    quality = None
    if len(normalized) > cfg.quality_k:
        quality = quality_measures(normalized, k=cfg.quality_k)

    initialized = initialize(normalized, cfg)
    optimized, state = run_diwr(initialized, cfg, reference_normals,
                                log_path, checkpoint_dir, verbose)
    retained, _ = retain_high_confidence(optimized, cfg.tau_in)
    mesh = extract_isosurface(retained, cfg.extract_resolution,
                              beta=cfg.beta, smoothing=cfg.extract_smoothing,
                              keep_largest=cfg.keep_largest,
                              box_margin=cfg.box_margin)

    return Reconstruction(mesh.transformed(normalized.scale_record),
                          optimized, retained, state, quality)
