"""Dirichlet-energy sample set with an exclusion band

Samples are voxel centers of a uniform grid over the box B (the unit cube
grown by a margin). Samples inside a ball B(p_i, r_s) around any
high-confidence point are dropped, r_s widening to the anchor spacing for
sparse samples. Samples whose voxel is partly covered by such a ball are
down-weighted by the uncovered fraction, clamped to [0.5, 1].
"""
import itertools

from dataclasses import dataclass

import numpy as np
import pandas as pd

from scipy.spatial import cKDTree

from diwr.parallel import get_threads

# sub-voxel quadrature points per axis
QUADRATURE = 4

_PAIRS_PER_CHUNK = 1 << 15


@dataclass(frozen=True, eq=False)
class EnergyGrid:
    """Retained samples of the energy grid

    Attributes
    ----------
    resolution: int
        Voxels per axis.
    box_min, box_max: float
        Extent of the cubic box along every axis.
    positions: np.ndarray
        (m, 3) retained voxel centers.
    deltas: np.ndarray
        (m,) partial-volume weights.
    voxel_ids: np.ndarray
        (m,) flat index of each retained voxel in the full grid.
    high_confidence: np.ndarray
        (n,) mask of the points the exclusion band was built from. The
        surface energy uses the same mask for the whole stage.
    r_s: float
        Exclusion radius actually used, see `band_radius`.
    """
    resolution: int
    box_min: float
    box_max: float
    positions: np.ndarray
    deltas: np.ndarray
    voxel_ids: np.ndarray
    high_confidence: np.ndarray
    r_s: float

    def __len__(self):
        return len(self.positions)

    @property
    def spacing(self):
        return (self.box_max - self.box_min) / self.resolution

    @property
    def voxel_volume(self):
        return self.spacing ** 3

    @property
    def weights(self):
        """delta_q V_c for every retained sample"""
        return self.deltas * self.voxel_volume

    def to_frame(self):
        return pd.DataFrame({'x': self.positions[:, 0],
                             'y': self.positions[:, 1],
                             'z': self.positions[:, 2],
                             'delta': self.deltas})

    def to_csv(self, path):
        """Write "x,y,z,delta" rows for inspection"""
        self.to_frame().to_csv(path, index=False)


def voxel_centers(resolution, box_min, box_max):
    """All resolution^3 voxel centers in C order"""
    spacing = (box_max - box_min) / resolution
    ticks = box_min + (np.arange(resolution) + 0.5) * spacing
    grid = np.stack(np.meshgrid(ticks, ticks, ticks, indexing='ij'), axis=-1)
    return grid.reshape(-1, 3)


def _quadrature_offsets(spacing):
    ticks = ((np.arange(QUADRATURE) + 0.5) / QUADRATURE - 0.5) * spacing
    grid = np.stack(np.meshgrid(ticks, ticks, ticks, indexing='ij'), axis=-1)
    return grid.reshape(-1, 3)


def ball_coverage(centers, balls, radius, spacing):
    """Fraction of each voxel covered by its paired ball

    Parameters
    ----------
    centers: np.ndarray
        (m, 3) voxel centers.
    balls: np.ndarray
        (m, 3) ball centers, one per voxel.
    radius: float
        Ball radius.
    spacing: float
        Voxel side.

    Returns
    -------
    np.ndarray
        (m,) covered volume fraction estimated with a fixed 4^3 sub-voxel
        rule.
    """
    offsets = _quadrature_offsets(spacing)
    covered = np.empty(len(centers))
    for start in range(0, len(centers), _PAIRS_PER_CHUNK):
        stop = start + _PAIRS_PER_CHUNK
        d = (centers[start:stop, None, :] + offsets[None, :, :] -
             balls[start:stop, None, :])
        inside = np.einsum('ijk,ijk->ij', d, d) < radius ** 2
        covered[start:stop] = inside.mean(axis=1)
    return covered


def band_radius(anchors, r_s, factor=1.0, cap=4.0):
    """Exclusion radius for a set of high-confidence points

    The radius is `r_s`, widened to `factor` times the median
    nearest-neighbour distance between the anchors when they are sampled
    more sparsely than that, and never above `cap * r_s`.

    Parameters
    ----------
    anchors: np.ndarray
        (k, 3) positions of the high-confidence points.
    r_s: float
        Minimum radius.
    factor: float
        Multiple of the median spacing, 0 disables widening.
    cap: float
        Largest radius as a multiple of `r_s`.

    Returns
    -------
    float
    """
    r_s = float(r_s)
    if factor <= 0 or len(anchors) < 2:
        return r_s
    distance, _ = cKDTree(anchors).query(anchors, k=2, workers=get_threads())
    spacing = float(np.median(distance[:, 1]))
    return float(min(max(r_s, factor * spacing), cap * r_s))


def build_grid(cloud, cfg, high_confidence=None):
    """Build the Dirichlet-energy sample set for the current confidences

    Parameters
    ----------
    cloud: PointCloud
        Cloud normalized to the unit cube.
    cfg: OptimConfig
        Supplies grid_resolution, box_margin, tau_in and the band
        settings r_s, band_spacing and band_cap.
    high_confidence: np.ndarray, optional
        Boolean mask overriding ``cloud.confidences >= cfg.tau_in``.

    Returns
    -------
    EnergyGrid
        An empty high-confidence set yields the full grid with unit
        weights.
    """
    resolution = int(cfg.grid_resolution)
    box_min, box_max = -cfg.box_margin, 1.0 + cfg.box_margin
    spacing = (box_max - box_min) / resolution
    centers = voxel_centers(resolution, box_min, box_max)

    if high_confidence is None:
        high_confidence = cloud.high_confidence(cfg.tau_in)
    high_confidence = np.asarray(high_confidence, dtype=bool).copy()
    high_confidence.setflags(write=False)

    anchors = cloud.positions[high_confidence]
    r_s = band_radius(anchors, cfg.r_s, cfg.band_spacing, cfg.band_cap)
    keep = np.ones(len(centers), dtype=bool)
    deltas = np.ones(len(centers))

    if len(anchors) and r_s > 0:
        tree = cKDTree(anchors)
        threads = get_threads()

        distance, _ = tree.query(centers, distance_upper_bound=r_s,
                                 workers=threads)
        keep = ~(distance < r_s)

        # a ball can only touch a voxel if its center is within r_s plus
        # half the voxel diagonal
        reach = r_s + 0.5 * np.sqrt(3.0) * spacing
        candidates = np.flatnonzero(keep)
        near = tree.query_ball_point(centers[candidates], reach,
                                     workers=threads, return_sorted=False)
        counts = np.fromiter((len(x) for x in near), dtype=np.int64,
                             count=len(near))
        if counts.sum():
            voxel = np.repeat(candidates, counts)
            ball = np.fromiter(itertools.chain.from_iterable(near),
                               dtype=np.int64, count=int(counts.sum()))
            covered = ball_coverage(centers[voxel], anchors[ball], r_s,
                                    spacing)
            worst = np.zeros(len(centers))
            np.maximum.at(worst, voxel, covered)
            deltas = np.clip(1.0 - worst, 0.5, 1.0)

    ids = np.flatnonzero(keep)
    return EnergyGrid(resolution, box_min, box_max, centers[ids],
                      deltas[ids], ids, high_confidence, r_s)
