"""Stress-test inputs: non-uniform resampling, noise and outliers

Corruptions are applied in a fixed order, resampling then noise then
outliers, and the levels of a suite are calibrated against the measured
quality of the result rather than against raw generator parameters.
"""
import os
import warnings

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from diwr.exceptions import NoInsideOracle
from diwr.metrics import difficulty_regime, quality_measures
from diwr.parallel import map_chunks
from diwr.pcio import MIN_POINTS, PointCloud, normalize_unit_cube, save_points

COMPOSITION_ORDER = 'resample>noise>outliers'
OUTLIER_MODES = ('box', 'interior', 'sheet')

# measured coverage a suite aims for, from the lightest to the heaviest level
TARGET_RANGES = {'sigma_hat': (0.00018, 0.0064),
                 'u_hat': (0.10, 0.87),
                 'o_hat': (0.042, 0.22)}
CALIBRATION_TOLERANCE = 0.15
CALIBRATION_STEPS = 12

# keep probability never drops below this, even at full strength
MIN_KEEP = 0.05
LOBES = 3

MANIFEST_COLUMNS = ['case_id', 'noise_level', 'outlier_level',
                    'nonuniform_level', 'strength', 'sigma_frac',
                    'outlier_rate', 'outlier_mode', 'order', 'n_points',
                    'n_outliers', 'sigma_hat', 'u_hat', 'o_hat', 'regime',
                    'path', 'mask_path']


def _side(cloud):
    extent = cloud.positions.max(axis=0) - cloud.positions.min(axis=0)
    return float(np.max(extent))


def nonuniform_resample(cloud, strength, seed=0):
    """Drop points with a keep probability that varies smoothly in space

    The keep probability is one minus `strength` times a field built from
    three Gaussian lobes centered on random points, so dense and sparse
    regions alternate over the shape.

    Parameters
    ----------
    cloud: PointCloud
        Cloud to thin out.
    strength: float
        Contrast of the keep probability, in [0, 1]. 0 keeps every point.
    seed: int
        Seed of the random generator.

    Returns
    -------
    PointCloud
        The kept points, every channel carried over.

    Raises
    ------
    ValueError
        If `strength` is outside [0, 1].
    """
    if not 0 <= strength <= 1:
        raise ValueError('strength must be in [0, 1], got %g' % strength)
    if strength == 0:
        return cloud

    rng = np.random.default_rng(seed)
    side = _side(cloud)
    centers = cloud.positions[rng.choice(len(cloud), LOBES,
                                         replace=len(cloud) < LOBES)]
    widths = rng.uniform(0.15, 0.35, LOBES) * side

    offsets = cloud.positions[:, None, :] - centers[None, :, :]
    squared = (offsets ** 2).sum(axis=-1)
    field = np.exp(-0.5 * squared / widths ** 2).sum(axis=1)
    field /= field.max()

    keep = 1.0 - strength * (1.0 - MIN_KEEP) * (1.0 - field)
    kept = np.flatnonzero(rng.uniform(size=len(cloud)) < keep)

    if len(kept) < MIN_POINTS:
        kept = np.sort(np.argsort(-keep)[:MIN_POINTS])
    return cloud.subset(kept)


def add_noise(cloud, sigma_frac, seed=0):
    """Offset every position by isotropic Gaussian noise

    The standard deviation is `sigma_frac` times the longest side of the
    bounding box. Normals and weights are left as they are.
    """
    if sigma_frac < 0:
        raise ValueError('sigma_frac must be non-negative, got %g'
                         % sigma_frac)
    if sigma_frac == 0:
        return cloud

    rng = np.random.default_rng(seed)
    sigma = sigma_frac * _side(cloud)
    offsets = rng.normal(scale=sigma, size=cloud.positions.shape)
    return replace(cloud, positions=cloud.positions + offsets)


def _box_outliers(cloud, count, rng, margin):
    low = cloud.positions.min(axis=0) - margin * _side(cloud)
    high = cloud.positions.min(axis=0) + (1.0 + margin) * _side(cloud)
    return rng.uniform(low, high, size=(count, 3))


def _interior_outliers(cloud, count, rng, inside):
    low = cloud.positions.min(axis=0)
    high = cloud.positions.max(axis=0)

    accepted = []
    total = 0
    for _ in range(1000):
        candidates = rng.uniform(low, high, size=(4 * count, 3))
        candidates = candidates[np.asarray(inside(candidates), dtype=bool)]
        accepted.append(candidates)
        total += len(candidates)
        if total >= count:
            return np.concatenate(accepted)[:count]

    raise ValueError('The inside test accepted %d of the %d points needed, '
                     'the shape encloses almost no volume' % (total, count))


def _sheet_outliers(cloud, count, rng):
    side = _side(cloud)
    patches = max(1, int(np.ceil(count / 250.0)))
    anchors = rng.choice(len(cloud), patches)

    points = []
    groups = np.array_split(np.arange(count), patches)
    for anchor, members in zip(anchors, groups):
        direction = cloud.normals[anchor]
        if not np.linalg.norm(direction) > 0:
            direction = rng.normal(size=3)
        direction = direction / np.linalg.norm(direction)

        center = (cloud.positions[anchor] +
                  rng.uniform(0.05, 0.15) * side * direction)
        plane = rng.normal(size=3)
        u = np.cross(plane, direction)
        if not np.linalg.norm(u) > 0:
            u = np.cross([1.0, 0.0, 0.0], direction)
        u /= np.linalg.norm(u)
        v = np.cross(plane / np.linalg.norm(plane), u)
        v /= np.linalg.norm(v)

        half = 0.1 * side
        coords = rng.uniform(-half, half, size=(len(members), 2))
        points.append(center + coords[:, :1] * u + coords[:, 1:] * v)
    return np.concatenate(points)


def inject_outliers(cloud, rate, mode='box', seed=0, inside=None,
                    box_margin=0.1):
    """Append ceil(rate * n) outliers to a cloud

    Parameters
    ----------
    cloud: PointCloud
        Clean cloud.
    rate: float
        Outliers per original point, in [0, 0.5].
    mode: str
        "box" samples the reconstruction box uniformly, "interior" samples
        the inside of the shape and "sheet" samples small planar patches
        detached from the surface.
    seed: int
        Seed of the random generator.
    inside: callable, optional
        Vectorized inside test, required by the interior mode.
    box_margin: float
        Margin of the box, relative to the longest bounding-box side.

    Returns
    -------
    PointCloud
        The original points followed by the outliers. Outliers have zero
        normals, the median area weight and full confidence.
    np.ndarray
        Boolean mask, True exactly on the injected points.

    Raises
    ------
    ValueError
        If `rate` or `mode` is invalid.
    NoInsideOracle
        If the interior mode is used without an inside test.
    """
    if not 0 <= rate <= 0.5:
        raise ValueError('rate must be in [0, 0.5], got %g' % rate)
    if mode not in OUTLIER_MODES:
        raise ValueError('Unknown outlier mode "%s", use one of %s'
                         % (mode, ', '.join(OUTLIER_MODES)))
    if mode == 'interior' and inside is None:
        raise NoInsideOracle('Interior outliers need an inside test, which '
                             'arbitrary point clouds do not have')

    n = len(cloud)
    count = int(np.ceil(rate * n))
    if count == 0:
        return cloud, np.zeros(n, dtype=bool)

    rng = np.random.default_rng(seed)
    if mode == 'box':
        injected = _box_outliers(cloud, count, rng, box_margin)
    elif mode == 'interior':
        injected = _interior_outliers(cloud, count, rng, inside)
    else:
        injected = _sheet_outliers(cloud, count, rng)

    weight = float(np.median(cloud.area_weights))
    corrupted = PointCloud(
        np.vstack([cloud.positions, injected]),
        np.vstack([cloud.normals, np.zeros((count, 3))]),
        np.concatenate([cloud.area_weights, np.full(count, weight)]),
        np.concatenate([cloud.confidences, np.ones(count)]),
        np.concatenate([cloud.densities, np.zeros(count, dtype=np.int64)]),
        scale_record=cloud.scale_record)

    mask = np.zeros(n + count, dtype=bool)
    mask[n:] = True
    return corrupted, mask


def corrupt(cloud, strength=0.0, sigma_frac=0.0, rate=0.0, mode='box',
            seed=0, inside=None):
    """Resample, add noise and inject outliers, in that order

    Returns
    -------
    PointCloud
        Corrupted cloud.
    np.ndarray
        Outlier mask.
    """
    seeds = np.random.SeedSequence(seed).generate_state(3)
    cloud = nonuniform_resample(cloud, strength, int(seeds[0]))
    cloud = add_noise(cloud, sigma_frac, int(seeds[1]))
    return inject_outliers(cloud, rate, mode, int(seeds[2]), inside)


def _measure(cloud, k):
    return quality_measures(normalize_unit_cube(cloud), k=k)


def calibrate(measure, target, low, high, steps=CALIBRATION_STEPS,
              tolerance=CALIBRATION_TOLERANCE):
    """Bisect a generator parameter until a measure hits `target`

    Parameters
    ----------
    measure: callable
        Maps a parameter value to the measured quantity; assumed to grow
        with the parameter.
    target: float
        Value to reach.
    low, high: float
        Parameter range.
    steps: int
        Maximum number of bisection steps.
    tolerance: float
        Accepted relative error.

    Returns
    -------
    float
        Parameter value.
    float
        Measured value at that parameter.
    """
    value_high = measure(high)
    if value_high <= target:
        if value_high < (1 - tolerance) * target:
            warnings.warn('The largest setting (%g) only reaches %g, short of'
                          ' the target %g' % (high, value_high, target))
        return high, value_high

    best = (high, value_high)
    for _ in range(steps):
        middle = 0.5 * (low + high)
        value = measure(middle)
        if abs(value - target) < abs(best[1] - target):
            best = (middle, value)
        if abs(value - target) <= tolerance * target:
            return middle, value
        if value < target:
            low = middle
        else:
            high = middle

    warnings.warn('Calibration stopped at %g (target %g) after %d steps'
                  % (best[1], target, steps))
    return best


def _targets(name, levels):
    low, high = TARGET_RANGES[name]
    if name == 'sigma_hat':
        return np.geomspace(low, high, levels)
    return np.linspace(low, high, levels)


def calibrate_levels(cloud, levels=5, seed=0, mode='box', inside=None,
                     k=20):
    """Generator settings reaching evenly spread measured levels

    Each axis is calibrated on its own against the clean cloud: the noise
    level against sigma_hat, the resampling strength against u_hat and the
    outlier rate against o_hat.

    Returns
    -------
    pd.DataFrame
        One row per level with the targets, the chosen settings and the
        values measured while calibrating.
    """
    def noise(value):
        return _measure(add_noise(cloud, value, seed), k).sigma_hat

    def resample(value):
        return _measure(nonuniform_resample(cloud, value, seed), k).u_hat

    def outliers(value):
        corrupted, _ = inject_outliers(cloud, value, mode, seed, inside)
        return _measure(corrupted, k).o_hat

    rows = []
    for level in range(levels):
        row = {'level': level}
        for name, setting, func, high in (
                ('sigma_hat', 'sigma_frac', noise, 0.05),
                ('u_hat', 'strength', resample, 1.0),
                ('o_hat', 'outlier_rate', outliers, 0.5)):
            target = _targets(name, levels)[level]
            row['target_' + name] = target
            row[setting], row['calibrated_' + name] = calibrate(
                func, target, 0.0, high)
        rows.append(row)
    return pd.DataFrame(rows)


@dataclass(frozen=True, eq=False)
class StressCase:
    """One corrupted input of a stress suite"""
    case_id: str
    cloud: PointCloud
    outliers: np.ndarray
    row: dict


def _normalized_inside(fixture, record):
    if fixture.inside is None:
        return None

    def inside(q):
        return fixture.inside(record.inverse(np.asarray(q, dtype=float)))
    return inside


def stress_suite(base_fixture, levels=5, seed=0, out_dir=None, mode='box',
                 calibrated=True, k=20, threads=None):
    """Cartesian grid of noise, outlier and non-uniformity levels

    Parameters
    ----------
    base_fixture: Fixture
        Clean shape; its cloud is normalized to the unit cube first.
    levels: int
        Levels per axis, the suite has levels^3 cases.
    seed: int
        Seed of the whole suite; each case derives its own generator.
    out_dir: str, optional
        When given, every case is written as ``<case_id>.xyz`` together
        with ``<case_id>_outliers.npy`` and the manifest as
        ``manifest.csv``.
    mode: str
        Outlier mode.
    calibrated: bool
        Calibrate the settings against measured quality. Otherwise the
        settings are spread linearly over the generator ranges.
    k: int
        Neighbour count of the quality measures.
    threads: int, optional
        Cases generated concurrently.

    Returns
    -------
    list of StressCase
        Cases in manifest order.
    pd.DataFrame
        The manifest, one row per case.
    """
    if levels < 1:
        raise ValueError('At least one level is needed, got %d' % levels)

    cloud = normalize_unit_cube(base_fixture.cloud)
    inside = _normalized_inside(base_fixture, cloud.scale_record)

    if levels == 1:
        # the single, lightest case is the clean shape
        settings = pd.DataFrame({'sigma_frac': [0.0], 'strength': [0.0],
                                 'outlier_rate': [0.0]})
    elif calibrated:
        settings = calibrate_levels(cloud, levels, seed, mode, inside, k)
    else:
        ramp = np.linspace(0, 1, levels)
        settings = pd.DataFrame({'sigma_frac': 0.02 * ramp,
                                 'strength': ramp,
                                 'outlier_rate': 0.2 * ramp})

    grid = [(i, j, m) for i in range(levels) for j in range(levels)
            for m in range(levels)]
    case_seeds = np.random.SeedSequence(seed).generate_state(len(grid))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    def work(start, stop):
        cases = []
        for index in range(start, stop):
            noise_level, outlier_level, nonuniform_level = grid[index]
            case_id = 'n%d_o%d_u%d' % grid[index]
            strength = float(settings['strength'][nonuniform_level])
            sigma_frac = float(settings['sigma_frac'][noise_level])
            rate = float(settings['outlier_rate'][outlier_level])

            corrupted, mask = corrupt(cloud, strength, sigma_frac, rate, mode,
                                      int(case_seeds[index]), inside)
            report = _measure(corrupted, k)

            path = mask_path = None
            if out_dir is not None:
                path = os.path.join(out_dir, case_id + '.xyz')
                mask_path = os.path.join(out_dir, case_id + '_outliers.npy')
                save_points(path, corrupted)
                np.save(mask_path, mask)

            row = {'case_id': case_id, 'noise_level': noise_level,
                   'outlier_level': outlier_level,
                   'nonuniform_level': nonuniform_level,
                   'strength': strength, 'sigma_frac': sigma_frac,
                   'outlier_rate': rate, 'outlier_mode': mode,
                   'order': COMPOSITION_ORDER, 'n_points': len(corrupted),
                   'n_outliers': int(mask.sum()),
                   'sigma_hat': report.sigma_hat, 'u_hat': report.u_hat,
                   'o_hat': report.o_hat,
                   'regime': difficulty_regime(report),
                   'path': path, 'mask_path': mask_path}
            cases.append(StressCase(case_id, corrupted, mask, row))
        return cases

    cases = [case for chunk in map_chunks(work, len(grid), 1, threads)
             for case in chunk]
    manifest = pd.DataFrame([case.row for case in cases],
                            columns=MANIFEST_COLUMNS)

    if out_dir is not None:
        manifest.to_csv(os.path.join(out_dir, 'manifest.csv'), index=False)
    return cases, manifest


def summarize_suite(results, clean_chamfer, factor=3.0):
    """Success rates of reconstructions over a stress suite

    A case succeeds when its mesh is watertight and its chamfer distance to
    the clean reference is at most `factor` times the chamfer distance of
    the clean-input reconstruction.

    Parameters
    ----------
    results: pd.DataFrame
        One row per case with columns case_id, regime, watertight and
        chamfer. Failed reconstructions have a NaN chamfer distance.
    clean_chamfer: float
        Chamfer distance of the clean reconstruction.
    factor: float
        Allowed degradation.

    Returns
    -------
    pd.DataFrame
        `results` with an added boolean success column.
    dict
        Case count, overall success rate and success rate over the easy
        and moderate cases (NaN when there are none).
    """
    missing = {'case_id', 'regime', 'watertight', 'chamfer'} - \
        set(results.columns)
    if missing:
        raise ValueError('The results are missing the columns: %s'
                         % ', '.join(sorted(missing)))

    results = results.copy()
    chamfer = results['chamfer'].astype(float)
    results['success'] = (results['watertight'].astype(bool) &
                          chamfer.notna() &
                          (chamfer <= factor * clean_chamfer))

    milder = results['regime'].isin(['easy', 'moderate'])
    summary = {'cases': int(len(results)),
               'success_rate': float(results['success'].mean()),
               'easy_moderate_rate': (float(results.loc[milder,
                                                        'success'].mean())
                                      if milder.any() else float('nan'))}
    return results, summary
