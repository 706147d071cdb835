"""Staged optimization of normals, area weights and confidences

One outer iteration alternates normal updates with area-weight stages until
the area weights stabilize, then runs one confidence stage. Outer
iterations stop once the normals of the high-confidence points barely
change, or after t_max iterations.
"""
import os
import time
import warnings

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from diwr.confidence import compute_densities, reset_confidences
from diwr.config import OptimConfig
from diwr.energies import AREA, CONF, EnergyModel, StageBaseline
from diwr.energy_grid import build_grid
from diwr.exceptions import EmptyHighConfidenceSet, NonFiniteEnergy
from diwr.messages import StageMessage, WarningMessage
from diwr.metrics import is_severe, orientation_error, quality_measures
from diwr.orientation import (OrientationUpdateConfig, hexagonal_cell_area,
                              init_area_uniform, init_area_voronoi,
                              init_normals_random, normal_change,
                              orient_sign, update_normals)
from diwr.pcio import save_points
from diwr.winding import KdPartition, WindingEvaluator

LOG_COLUMNS = ['t', 'stage', 'e_diri', 'e_surf', 'e_area', 'e_conf',
               'total', 'delta_a', 'delta_n', 'orientation_error',
               'wallclock_ms']

# learning-rate halvings tried before an inner loop gives up
MAX_BACKTRACKS = 5


def rmsprop_step(values, grads, moments, lr, decay, eps,
                 lower_bound=-np.inf, upper_bound=np.inf):
    """One projected RMSProp update

    Parameters
    ----------
    values, grads, moments: np.ndarray
        Current values, their gradients and the running mean of squared
        gradients.
    lr: float or np.ndarray
        Learning rate.
    decay: float
        Moment decay in (0, 1).
    eps: float
        Added to the moments before the square root.
    lower_bound, upper_bound: float
        Box the values are clamped to.

    Returns
    -------
    np.ndarray, np.ndarray
        Updated values and moments.
    """
    grads = np.asarray(grads, dtype=float)
    moments = decay * np.asarray(moments, dtype=float) + \
        (1.0 - decay) * grads ** 2
    denominator = np.sqrt(moments + eps)
    with np.errstate(invalid='ignore', divide='ignore'):
        step = np.where(denominator > 0, lr * grads / denominator, 0.0)
    values = np.clip(np.asarray(values, dtype=float) - step, lower_bound,
                     upper_bound)
    return values, moments


def area_change(area_weights, baseline):
    """delta_a, the mean relative change of the area weights

    Points whose baseline weight is zero contribute nothing but still count
    in the mean.
    """
    a_b = baseline.a_baseline
    defined = a_b != 0
    if not len(a_b):
        return 0.0
    relative = np.abs(area_weights[defined] - a_b[defined]) / a_b[defined]
    return float(relative.sum() / len(a_b))


@dataclass
class OptimizerState:
    """Everything the staged optimization carries between stages

    Attributes
    ----------
    cloud: PointCloud
        Current theta.
    t: int
        Outer iteration, 0-based.
    grid: EnergyGrid
        Dirichlet samples for the current high-confidence set.
    baseline: StageBaseline
        Snapshot taken at the start of the latest stage.
    moments_a, moments_c: np.ndarray
        RMSProp accumulators.
    lambdas: tuple of float
        Current lambda1..lambda5.
    severe: bool
        Whether the severe-input weights are used.
    records: list of dict
        One log record per stage.
    reports: list of ConfidenceResetReport
        One per confidence stage.
    delta_a, delta_n: list of float
        Histories of the area-weight and normal changes.
    histories: list of np.ndarray
        Objective totals of the accepted inner steps, one array per stage.
    """
    cloud: object
    t: int = 0
    grid: object = None
    baseline: object = None
    moments_a: np.ndarray = None
    moments_c: np.ndarray = None
    lambdas: tuple = ()
    severe: bool = False
    partition: object = None
    records: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    delta_a: list = field(default_factory=list)
    delta_n: list = field(default_factory=list)
    histories: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.cloud)
        if self.moments_a is None:
            self.moments_a = np.zeros(n)
        if self.moments_c is None:
            self.moments_c = np.zeros(n)
        if self.partition is None:
            self.partition = KdPartition(self.cloud.positions)

    @property
    def log(self):
        return pd.DataFrame(self.records, columns=LOG_COLUMNS)

    def record(self, stage, breakdown=None, started=None, **values):
        row = {'t': self.t, 'stage': stage}
        if breakdown is not None:
            row.update(breakdown.to_dict())
        row.update(values)
        if started is not None:
            row['wallclock_ms'] = 1e3 * (time.perf_counter() - started)
        self.records.append(row)
        return row

    def write_log(self, path):
        """Write the records as JSON lines"""
        self.log.to_json(path, orient='records', lines=True)


def _check_finite(state, breakdown, grad, stage):
    if np.isfinite(breakdown.total) and np.all(np.isfinite(grad)):
        return
    raise NonFiniteEnergy('The %s stage of iteration %d produced a '
                          'non-finite energy or gradient' % (stage, state.t),
                          log=state.log)


def _energy_model(state, cfg):
    return EnergyModel(state.cloud, state.grid, beta=cfg.beta,
                       dense_pair_limit=cfg.dense_pair_limit,
                       partition=state.partition)


def _inner_loop(state, cfg, stage, lambdas, steps, lr, bounds):
    """RMSProp steps on a or c with backtracking and an early exit

    A step that would increase the objective is retried with half the
    learning rate, up to MAX_BACKTRACKS times; the stage ends when no
    retry decreases it. The accepted totals are appended to
    ``state.histories``.
    """
    model = _energy_model(state, cfg)
    baseline = state.baseline
    moments = state.moments_a if stage == AREA else state.moments_c
    attribute = 'area_weights' if stage == AREA else 'confidences'

    current, grad = model.evaluate(state.cloud, baseline, stage, lambdas)
    _check_finite(state, current, grad, stage)
    before = current
    history = [current.total]

    window = cfg.early_exit_window
    for _ in range(steps):
        if not np.any(grad):
            break
        if len(history) > window and abs(history[-1] - history[-1 - window]) \
                <= cfg.early_exit_tol * abs(history[-1 - window]):
            break

        step_lr = lr
        for _ in range(MAX_BACKTRACKS + 1):
            values, trial_moments = rmsprop_step(
                getattr(state.cloud, attribute), grad, moments, step_lr,
                cfg.rmsprop_decay, cfg.rmsprop_epsilon, *bounds)
            trial = state.cloud.with_state(**{attribute: values})
            breakdown, trial_grad = model.evaluate(trial, baseline, stage,
                                                   lambdas)
            _check_finite(state, breakdown, trial_grad, stage)
            if breakdown.total <= current.total:
                break
            step_lr *= 0.5
        else:
            break

        state.cloud = trial
        current, grad, moments = breakdown, trial_grad, trial_moments
        history.append(current.total)

    if stage == AREA:
        state.moments_a = moments
    else:
        state.moments_c = moments
    state.histories.append(np.array(history))
    return before, current


def optimize_area_stage(state, cfg):
    """Minimize E_diri + lambda1 E_surf + lambda2 E_area over a >= 0

    The learning rate is relative to the mean baseline area weight, so the
    stage behaves the same whatever the scale of the weights.
    """
    started = time.perf_counter()
    state.baseline = StageBaseline.capture(state.cloud)
    mean_area = float(np.mean(state.baseline.a_baseline))
    lr = cfg.learning_rate_a * (mean_area if mean_area > 0 else 1.0)

    _, after = _inner_loop(state, cfg, AREA, state.lambdas[:2],
                           cfg.max_inner_steps_a, lr, (0.0, np.inf))

    delta_a = area_change(state.cloud.area_weights, state.baseline)
    state.delta_a.append(delta_a)
    state.record('area', after, started, delta_a=delta_a)
    return state


def _high_confidence_or_previous(state, cfg):
    mask = state.cloud.high_confidence(cfg.tau_in)
    if mask.any():
        return mask
    warnings.warn('No point reached a confidence of %g in iteration %d, the '
                  'previous high-confidence set is kept' %
                  (cfg.tau_in, state.t))
    return state.grid.high_confidence


def optimize_conf_stage(state, cfg):
    """Reset the confidences, then minimize the confidence objective

    The reset splits the self-excluded winding values with bi-means and
    softens the labels by density level. The energy grid follows the new
    high-confidence set both before and after the gradient steps.
    """
    started = time.perf_counter()
    evaluator = WindingEvaluator(state.cloud, beta=cfg.beta,
                                 partition=state.partition)
    values = evaluator.winding_at_points()
    confidences, report = reset_confidences(state.cloud, values)
    state.reports.append(report)
    state.cloud = state.cloud.with_state(confidences=confidences)

    state.grid = build_grid(state.cloud, cfg,
                            _high_confidence_or_previous(state, cfg))
    state.baseline = StageBaseline.capture(state.cloud)

    _, after = _inner_loop(state, cfg, CONF, state.lambdas[2:],
                           cfg.max_inner_steps_c, cfg.learning_rate_c,
                           (0.0, 1.0))

    state.grid = build_grid(state.cloud, cfg,
                            _high_confidence_or_previous(state, cfg))
    state.record('conf', after, started)
    return state


def initialize(cloud, cfg=None, seed=None):
    """Random normals, initial area weights, unit confidences and densities

    Parameters
    ----------
    cloud: PointCloud
        Normalized cloud.
    cfg: OptimConfig, optional
        Supplies area_init, voronoi_k and r_rho.
    seed: int, optional
        Normal seed, defaults to cfg.seed.

    Returns
    -------
    PointCloud
    """
    cfg = OptimConfig() if cfg is None else cfg
    seed = cfg.seed if seed is None else seed

    cloud = init_normals_random(cloud, seed)
    if cfg.area_init == 'voronoi':
        areas = init_area_voronoi(cloud, min(cfg.voronoi_k, len(cloud) - 1))
    else:
        areas = init_area_uniform(cloud) * hexagonal_cell_area(cloud)

    return cloud.with_state(area_weights=areas,
                            confidences=np.ones(len(cloud)),
                            densities=compute_densities(cloud, cfg.r_rho))


def orient(cloud, cfg, verbose=False):
    """Normal updates with the sign post-pass, theta otherwise unchanged"""
    evaluator = WindingEvaluator(cloud, beta=cfg.beta)
    normals, change = update_normals(
        cloud, evaluator, OrientationUpdateConfig.from_optim_config(cfg))
    cloud = cloud.with_state(normals=normals)
    normals, flipped = orient_sign(cloud, cfg.r_s)
    if verbose:
        StageMessage('normals updated, last mean change %.4f rad%s' %
                     (change, ', flipped' if flipped else '')).echo()
    return cloud.with_state(normals=normals)


def _severity(cloud, cfg, severe):
    if severe is not None:
        return bool(severe)
    if cfg.severity == 'auto':
        if len(cloud) <= cfg.quality_k:
            return False
        return is_severe(quality_measures(cloud, k=cfg.quality_k))
    return cfg.severity == 'severe'


def run_diwr(cloud, cfg=None, reference_normals=None, log_path=None,
             checkpoint_dir=None, verbose=False, severe=None):
    """Run the staged optimization

    Parameters
    ----------
    cloud: PointCloud
        Normalized cloud with initialized normals, area weights,
        confidences and densities (see `initialize`).
    cfg: OptimConfig, optional
        Settings, the defaults otherwise.
    reference_normals: np.ndarray, optional
        Ground-truth normals; when given the orientation error is logged
        after every outer iteration.
    log_path: str, optional
        Where to write the JSON lines log.
    checkpoint_dir: str, optional
        Directory for a PLY checkpoint of theta after every outer
        iteration.
    verbose: bool
        Print a line per stage.
    severe: bool, optional
        Force the severe (halved) or regular lambdas, otherwise decided by
        `cfg.severity`.

    Returns
    -------
    PointCloud
        Final theta.
    OptimizerState
        State with the full log.

    Raises
    ------
    NonFiniteEnergy
        If an energy or gradient becomes NaN or infinite; the log so far is
        attached.
    """
    cfg = (OptimConfig() if cfg is None else cfg).validate()
    orient_cfg = OrientationUpdateConfig.from_optim_config(cfg)

    state = OptimizerState(cloud)
    state.severe = _severity(cloud, cfg, severe)
    state.grid = build_grid(cloud, cfg)
    if not state.grid.high_confidence.any():
        raise EmptyHighConfidenceSet('No point has a confidence of at least '
                                     '%g' % cfg.tau_in)

    if verbose:
        StageMessage('%d points, %s inputs, %d energy samples' %
                     (len(cloud), 'severe' if state.severe else 'regular',
                      len(state.grid))).echo()

    started = time.perf_counter()
    state.lambdas = cfg.scheduled_lambdas(0, state.severe)
    state.baseline = StageBaseline.capture(cloud)
    initial = _energy_model(state, cfg).evaluate(
        cloud, state.baseline, AREA, state.lambdas[:2], gradient=False)
    state.record('init', initial, started)

    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)

    try:
        for t in range(cfg.t_max):
            state.t = t
            state.lambdas = cfg.scheduled_lambdas(t, state.severe)
            start_normals = state.cloud.normals

            for _ in range(cfg.max_area_rounds):
                started = time.perf_counter()
                evaluator = WindingEvaluator(state.cloud, beta=cfg.beta,
                                             partition=state.partition)
                normals, _ = update_normals(state.cloud, evaluator,
                                            orient_cfg)
                state.cloud = state.cloud.with_state(normals=normals)
                normals, flipped = orient_sign(state.cloud, cfg.r_s)
                if flipped:
                    state.cloud = state.cloud.with_state(normals=normals)
                state.record('normals', started=started)

                optimize_area_stage(state, cfg)
                if verbose:
                    StageMessage('t=%d area stage, delta_a=%.4f' %
                                 (t, state.delta_a[-1])).echo()
                if state.delta_a[-1] <= cfg.eps_a:
                    break

            optimize_conf_stage(state, cfg)

            mask = state.cloud.high_confidence(cfg.tau_in)
            if not mask.any():
                mask = np.ones(len(state.cloud), dtype=bool)
            delta_n = normal_change(start_normals, state.cloud.normals, mask)
            state.delta_n.append(delta_n)

            extra = {'delta_n': delta_n}
            if reference_normals is not None:
                extra['orientation_error'] = orientation_error(
                    state.cloud.normals, reference_normals)[0]
            state.records[-1].update(extra)

            if verbose:
                StageMessage('t=%d confidence stage, %d high-confidence '
                             'points, delta_n=%.4f' %
                             (t, mask.sum(), delta_n)).echo()

            if checkpoint_dir is not None:
                save_points(os.path.join(checkpoint_dir,
                                         'theta_%03d.ply' % t), state.cloud)

            if delta_n <= cfg.eps_n:
                break
        else:
            if verbose:
                WarningMessage('stopped after t_max=%d iterations' %
                               cfg.t_max).echo()
    finally:
        if log_path is not None:
            state.write_log(log_path)

    return state.cloud, state


def polarization(cloud, low=0.1, high=0.9):
    """Share of confidences strictly between `low` and `high`"""
    c = cloud.confidences
    return float(np.mean((c > low) & (c < high)))

