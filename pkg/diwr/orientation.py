"""Normal and area-weight initialization and the normal update operator

The update aligns every normal with the negated, self-excluded gradient of
the current winding field. Blending with the previous normal damps the
iteration, and an optional kernel width annealed from coarse to fine lets
early sweeps see the global shape before local detail.
"""
import warnings

from dataclasses import dataclass

import numpy as np

from scipy.spatial import cKDTree

from diwr.exceptions import DegenerateNeighborhood, EmptyMask
from diwr.parallel import concat_chunks, get_threads
from diwr.winding import (DEFAULT_BETA, POTENTIAL, WindingEvaluator,
                          evaluate_dense)

# gradients shorter than this carry no orientation information
MIN_GRADIENT = 1e-10

# relative eigenvalue below which a neighbourhood counts as collinear
COLLINEAR_TOLERANCE = 1e-10

# vertices of the disc every Voronoi cell is clipped to
DISC_VERTICES = 64

HEXAGON_FACTOR = np.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class OrientationUpdateConfig:
    """Settings of `update_normals`

    Attributes
    ----------
    inner_iters: int
        Maximum number of sweeps.
    blend: float
        Weight of the field direction in each sweep, in (0, 1].
    tol: float
        Stop once the mean angular change of a sweep (radians) is smaller.
    width_start, width_end: float
        Kernel smoothing width of the first and last sweep, interpolated
        geometrically. Zero widths evaluate the exact field.
    beta: float
        Far-field ratio of the evaluator rebuilt at every sweep.
    """
    inner_iters: int = 20
    blend: float = 0.5
    tol: float = 1e-3
    width_start: float = 0.0
    width_end: float = 0.0
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.inner_iters < 1:
            raise ValueError('inner_iters must be at least 1, got %d' %
                             self.inner_iters)
        if not 0 < self.blend <= 1:
            raise ValueError('blend must be in (0, 1], got %g' % self.blend)

    @classmethod
    def from_optim_config(cls, cfg):
        return cls(cfg.orient_iters, cfg.orient_blend, cfg.orient_tol,
                   cfg.orient_width_start, cfg.orient_width_end, cfg.beta)

    def width(self, sweep):
        if self.width_start <= 0 or self.width_end <= 0:
            return max(self.width_start, self.width_end, 0.0)
        if self.inner_iters == 1:
            return self.width_end
        ratio = self.width_end / self.width_start
        return self.width_start * ratio ** (sweep / (self.inner_iters - 1))


def _normalize(vectors):
    lengths = np.linalg.norm(vectors, axis=1)
    return vectors / lengths[:, None]


def init_normals_random(cloud, seed=0):
    """Cloud with normals drawn uniformly on the unit sphere"""
    rng = np.random.default_rng(seed)
    normals = rng.normal(size=(len(cloud), 3))
    # a zero draw has probability zero but would break the normalization
    normals[np.linalg.norm(normals, axis=1) == 0] = [0.0, 0.0, 1.0]
    return cloud.with_state(normals=_normalize(normals))


def init_area_uniform(cloud):
    return np.ones(len(cloud))


def hexagonal_cell_area(cloud):
    """Area of a hexagonal cell at the median nearest-neighbour spacing

    Used to bring uniform area weights to the scale of the surface.
    """
    distances, _ = cKDTree(cloud.positions).query(cloud.positions, k=2,
                                                  workers=get_threads())
    return HEXAGON_FACTOR * float(np.median(distances[:, 1])) ** 2


def _clip(poly, count, normal, offset):
    """Clip convex polygons to {y : y . normal <= offset}

    poly is (m, V, 2) with the `count` valid vertices first in every row.
    """
    m, capacity, _ = poly.shape
    index = np.arange(capacity)[None, :]
    valid = index < count[:, None]
    following = np.where(index + 1 < count[:, None], index + 1, 0)
    nxt = np.take_along_axis(poly, following[..., None], axis=1)

    sa = np.einsum('ijk,ik->ij', poly, normal) - offset[:, None]
    sb = np.einsum('ijk,ik->ij', nxt, normal) - offset[:, None]

    keep = valid & (sa <= 0)
    cross = valid & (sa * sb < 0)
    with np.errstate(invalid='ignore', divide='ignore'):
        t = np.where(cross, sa / (sa - sb), 0.0)
    crossing = poly + t[..., None] * (nxt - poly)

    out = np.empty((m, 2 * capacity, 2))
    out[:, 0::2] = poly
    out[:, 1::2] = crossing
    out_valid = np.empty((m, 2 * capacity), dtype=bool)
    out_valid[:, 0::2] = keep
    out_valid[:, 1::2] = cross

    order = np.argsort(~out_valid, axis=1, kind='stable')
    out = np.take_along_axis(out, order[..., None], axis=1)
    count = out_valid.sum(axis=1)
    width = max(int(count.max()), 1)
    return out[:, :width], count


def _polygon_area(poly, count):
    index = np.arange(poly.shape[1])[None, :]
    valid = index < count[:, None]
    following = np.where(index + 1 < count[:, None], index + 1, 0)
    nxt = np.take_along_axis(poly, following[..., None], axis=1)
    cross = poly[..., 0] * nxt[..., 1] - nxt[..., 0] * poly[..., 1]
    return 0.5 * np.abs(np.sum(np.where(valid, cross, 0.0), axis=1))


def _voronoi_areas(offsets):
    """Clipped planar Voronoi cell areas of the origin

    offsets is (m, k, 2), the projected neighbours relative to each point.
    """
    m = len(offsets)
    lengths2 = np.einsum('ijk,ijk->ij', offsets, offsets)
    radius = np.sqrt(lengths2.max(axis=1))

    angles = 2.0 * np.pi * np.arange(DISC_VERTICES) / DISC_VERTICES
    disc = np.column_stack([np.cos(angles), np.sin(angles)])
    poly = radius[:, None, None] * disc[None, :, :]
    count = np.full(m, DISC_VERTICES)

    for j in range(offsets.shape[1]):
        # bisector half-plane of the origin and neighbour j; coincident
        # neighbours impose nothing
        offset = np.where(lengths2[:, j] > 0, 0.5 * lengths2[:, j], np.inf)
        poly, count = _clip(poly, count, offsets[:, j], offset)

    return _polygon_area(poly, count)


def init_area_voronoi(cloud, k=12, chunk_size=8192):
    """Area weights from planar Voronoi cells of local neighbourhoods

    For every point the k nearest neighbours define a PCA plane; the
    neighbours are projected onto it and the area of the point's Voronoi
    cell, clipped to the disc through the furthest neighbour, becomes its
    weight.

    Parameters
    ----------
    cloud: PointCloud
        Input positions.
    k: int
        Neighbour count, at least 3 and smaller than the number of points.
    chunk_size: int
        Points processed per vectorized batch.

    Returns
    -------
    np.ndarray
        (n,) positive area weights.

    Raises
    ------
    ValueError
        If k is out of range.
    DegenerateNeighborhood
        If every neighbourhood is collinear.
    """
    n = len(cloud)
    if k < 3 or k >= n:
        raise ValueError('k must be in [3, %d), got %d' % (n, k))

    positions = cloud.positions
    _, neighbours = cKDTree(positions).query(positions, k=k + 1,
                                             workers=get_threads())
    neighbours = neighbours[:, 1:]

    def work(start, stop):
        local = positions[neighbours[start:stop]]
        center = positions[start:stop]
        everything = np.concatenate([center[:, None, :], local], axis=1)
        centered = everything - everything.mean(axis=1)[:, None, :]
        covariance = np.einsum('ijk,ijl->ikl', centered, centered)
        values, vectors = np.linalg.eigh(covariance)

        degenerate = values[:, 1] <= COLLINEAR_TOLERANCE * values[:, 2]
        u, v = vectors[:, :, 2], vectors[:, :, 1]
        relative = local - center[:, None, :]
        offsets = np.stack([np.einsum('ijk,ik->ij', relative, u),
                            np.einsum('ijk,ik->ij', relative, v)], axis=-1)
        areas = _voronoi_areas(offsets)
        areas[degenerate] = np.nan
        return areas

    areas = concat_chunks(work, n, chunk_size)
    undefined = ~np.isfinite(areas) | (areas <= 0)
    if undefined.all():
        raise DegenerateNeighborhood('Every neighbourhood of %d points is '
                                     'collinear, no area can be estimated'
                                     % k)
    if undefined.any():
        warnings.warn('%d points have a degenerate neighbourhood, their area'
                      ' weight is the mean of the others' % undefined.sum())
        areas[undefined] = areas[~undefined].mean()
    return areas


def update_normals(cloud, evaluator=None, cfg=None):
    """Align normals with the negated self-excluded field gradient

    Parameters
    ----------
    cloud: PointCloud
        Current state; the effective weights a_i c_i shape the field.
    evaluator: WindingEvaluator, optional
        Evaluator over `cloud`. Its partition and thread count are reused
        when the field is rebuilt after every sweep.
    cfg: OrientationUpdateConfig, optional
        Update settings.

    Returns
    -------
    np.ndarray
        (n, 3) unit normals.
    float
        Mean angular change of the last sweep, in radians.
    """
    cfg = OrientationUpdateConfig() if cfg is None else cfg
    partition, threads = None, None
    if evaluator is not None:
        evaluator.check(cloud)
        partition, threads = evaluator.partition, evaluator.threads

    normals = np.array(cloud.normals)
    change = 0.0
    current = cloud
    for sweep in range(cfg.inner_iters):
        field = WindingEvaluator(current, beta=cfg.beta,
                                 eps=cfg.width(sweep), partition=partition,
                                 threads=threads)
        partition = field.partition
        gradients = field.gradient_at_points()

        lengths = np.linalg.norm(gradients, axis=1)
        active = lengths >= MIN_GRADIENT
        direction = np.zeros_like(gradients)
        direction[active] = gradients[active] / lengths[active, None]

        blended = (1.0 - cfg.blend) * normals - cfg.blend * direction
        blended_lengths = np.linalg.norm(blended, axis=1)
        # a normal exactly opposite to the target cancels out
        opposite = active & (blended_lengths < 1e-12)
        blended[opposite] = -direction[opposite]
        blended_lengths[opposite] = 1.0

        updated = normals.copy()
        updated[active] = blended[active] / blended_lengths[active, None]

        cosine = np.clip(np.einsum('ij,ij->i', normals, updated), -1, 1)
        change = float(np.mean(np.arccos(cosine)))
        normals = updated
        current = current.with_state(normals=normals)

        if change < cfg.tol:
            break

    return normals, change


def orient_sign(cloud, r_s=0.03, probes=32, beta=0.0):
    """Flip all normals if the field is negative on the inner side

    Probes sit at p_i - 2 r_s n_i and p_i + 2 r_s n_i for the points with
    the highest confidence. For outward normals the two probe values sum to
    about +1, for inward ones to about -1.

    Parameters
    ----------
    cloud: PointCloud
        Cloud with candidate normals.
    r_s: float
        Exclusion radius, probes sit at twice this distance.
    probes: int
        Number of probe points.
    beta: float
        Far-field ratio, 0 for the exact field.

    Returns
    -------
    np.ndarray
        The normals, flipped or not.
    bool
        Whether the normals were flipped.
    """
    count = min(probes, len(cloud))
    ranked = np.argsort(-cloud.confidences, kind='stable')[:count]
    base = cloud.positions[ranked]
    offset = 2.0 * r_s * cloud.normals[ranked]
    queries = np.concatenate([base - offset, base + offset])

    if beta > 0:
        values = WindingEvaluator(cloud, beta=beta).winding(queries)
    else:
        moments = cloud.effective_weights[:, None] * cloud.normals
        values = evaluate_dense(POTENTIAL, cloud.positions, moments, queries)

    score = np.median(values[:count] + values[count:])
    if score < 0:
        return -cloud.normals, True
    return np.array(cloud.normals), False


def normal_change(old_normals, new_normals, high_conf_mask):
    """Mean of (1 - cos)/2 between old and new normals over a mask

    Raises
    ------
    EmptyMask
        If the mask selects no point.
    """
    mask = np.asarray(high_conf_mask, dtype=bool)
    if not mask.any():
        raise EmptyMask('Cannot measure the normal change over an empty set '
                        'of points')
    cosine = np.einsum('ij,ij->i', np.asarray(old_normals)[mask],
                       np.asarray(new_normals)[mask])
    return float(np.mean((1.0 - np.clip(cosine, -1, 1)) / 2.0))
