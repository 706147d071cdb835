import json

from dataclasses import dataclass, field, replace

import numpy as np

from scipy.spatial import cKDTree

from diwr.parallel import get_threads

DENSITY_LEVELS = 128
PROTECTION_BAND = 0.1
MAX_LLOYD_ITERATIONS = 100


@dataclass(frozen=True, eq=False)
class ConfidenceResetReport:
    """What happened during one confidence reset

    Attributes
    ----------
    outlier_cluster_mean, inlier_cluster_mean: float
        Means of the two bi-means clusters of winding values.
    global_mean: float
        Mean winding value over all points.
    outlier_count: int
        Points labelled as outliers by the split.
    protected_count: int
        Points whose confidence was kept because their winding value is
        close to the global mean.
    level_means: np.ndarray
        Mean binary confidence per density level, NaN for empty levels.
    """
    outlier_cluster_mean: float
    inlier_cluster_mean: float
    global_mean: float
    outlier_count: int = 0
    protected_count: int = 0
    level_means: np.ndarray = field(
        default_factory=lambda: np.full(DENSITY_LEVELS, np.nan))

    def to_dict(self):
        return {'outlier_cluster_mean': self.outlier_cluster_mean,
                'inlier_cluster_mean': self.inlier_cluster_mean,
                'global_mean': self.global_mean,
                'outlier_count': self.outlier_count,
                'protected_count': self.protected_count,
                'level_means': [None if np.isnan(v) else float(v)
                                for v in self.level_means]}

    def to_json(self):
        return json.dumps(self.to_dict())


def bimeans_split(values, max_iterations=MAX_LLOYD_ITERATIONS):
    """Two-means clustering of scalar winding values

    Lloyd iterations start from the minimum and maximum value. The cluster
    whose mean lies further from the global mean is the outlier cluster;
    when both are equally far the higher-valued cluster is.

    Parameters
    ----------
    values: array_like
        Winding values, at least two.
    max_iterations: int
        Cap on the Lloyd iterations.

    Returns
    -------
    np.ndarray
        Binary confidences, 0 for outliers and 1 for inliers.
    ConfidenceResetReport
        Cluster means and the global mean.

    Raises
    ------
    ValueError
        If fewer than two values are given.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise ValueError('The bi-means split needs at least 2 values, got %d'
                         % len(values))

    global_mean = float(values.mean())
    low, high = float(values.min()), float(values.max())
    if low == high:
        return (np.ones(len(values)),
                ConfidenceResetReport(global_mean, global_mean, global_mean))

    upper = values > 0.5 * (low + high)
    for _ in range(max_iterations):
        low, high = values[~upper].mean(), values[upper].mean()
        assignment = np.abs(values - high) < np.abs(values - low)
        if np.array_equal(assignment, upper) or assignment.all() or \
                not assignment.any():
            break
        upper = assignment
    low, high = values[~upper].mean(), values[upper].mean()

    if abs(high - global_mean) >= abs(low - global_mean):
        outliers, outlier_mean, inlier_mean = upper, high, low
    else:
        outliers, outlier_mean, inlier_mean = ~upper, low, high

    binary = np.where(outliers, 0.0, 1.0)
    return binary, ConfidenceResetReport(float(outlier_mean),
                                         float(inlier_mean), global_mean,
                                         outlier_count=int(outliers.sum()))


def density_levels(densities, levels=DENSITY_LEVELS):
    """Equal-width level index over [min rho, max rho] for every point"""
    densities = np.asarray(densities, dtype=float)
    low, high = densities.min(), densities.max()
    if high == low:
        return np.zeros(len(densities), dtype=np.int64)
    index = np.floor((densities - low) / (high - low) * levels)
    return np.clip(index, 0, levels - 1).astype(np.int64)


def density_stratified_reset(cloud, binary_c, winding_values,
                             global_mean=None, levels=DENSITY_LEVELS,
                             band=PROTECTION_BAND, report=None):
    """Soften binary confidences by their density level mean

    Parameters
    ----------
    cloud: PointCloud
        Supplies the densities and the confidences before the reset.
    binary_c: array_like
        Labels from `bimeans_split`.
    winding_values: array_like
        Self-excluded winding value at every point.
    global_mean: float, optional
        Mean winding value, computed from `winding_values` when omitted.
    levels: int
        Number of equal-width density levels.
    band: float
        Points with |w - global_mean| <= band keep their confidence.
    report: ConfidenceResetReport, optional
        Report to complete with level means and the protected count.

    Returns
    -------
    np.ndarray
        New confidences in [0, 1].
    ConfidenceResetReport or None
        `report` completed, None when no report was passed.
    """
    binary_c = np.asarray(binary_c, dtype=float)
    winding_values = np.asarray(winding_values, dtype=float)
    if global_mean is None:
        global_mean = float(winding_values.mean())

    level = density_levels(cloud.densities, levels)
    counts = np.bincount(level, minlength=levels)
    sums = np.bincount(level, weights=binary_c, minlength=levels)
    with np.errstate(invalid='ignore', divide='ignore'):
        level_means = np.where(counts > 0, sums / np.maximum(counts, 1),
                               np.nan)

    protected = np.abs(winding_values - global_mean) <= band
    reset = np.where(protected, cloud.confidences, level_means[level])
    reset = np.clip(reset, 0.0, 1.0)

    if report is not None:
        report = replace(report, protected_count=int(protected.sum()),
                         level_means=level_means)
    return reset, report


def reset_confidences(cloud, winding_values, levels=DENSITY_LEVELS,
                      band=PROTECTION_BAND):
    """Bi-means split followed by the density-stratified softening"""
    binary, report = bimeans_split(winding_values)
    return density_stratified_reset(cloud, binary, winding_values,
                                    report.global_mean, levels, band, report)


def compute_densities(cloud, r_rho):
    """Number of other points within `r_rho` of every point

    Parameters
    ----------
    cloud: PointCloud
        Normalized cloud.
    r_rho: float
        Ball radius, distances equal to the radius count.

    Returns
    -------
    np.ndarray
        (n,) integer neighbour counts.
    """
    tree = cKDTree(cloud.positions)
    counts = tree.query_ball_point(cloud.positions, r_rho,
                                   return_length=True, workers=get_threads())
    return np.asarray(counts, dtype=np.int64) - 1
