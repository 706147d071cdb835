"""Energy terms of the area-weight and confidence subproblems

Every term depends on the area weights a and confidences c only through
the effective weights e = a * c, and the winding field is linear in e.
With G_i(q) the field gradient of a unit-weight dipole at p_i and
K_i(x) its potential,

    dE_diri/de_i = 2 n_i . sum_q delta_q V_c J(p_i - q) grad w(q)
    dE_surf/de_i = n_i . sum_j s_j (p_i - p_j) / (4 pi |p_i - p_j|^3)

with J the symmetric dipole-gradient tensor and s_j = 2 (w(p_j) - 1/2)/|I|.
Both sums are fields of sources sitting on the grid and on the points, so
large problems evaluate them with the same tree as the forward pass; small
problems cache the kernels densely.
"""
import json

from dataclasses import asdict, dataclass

import numpy as np

from diwr.exceptions import EmptyHighConfidenceSet, StaleTree
from diwr.winding import (CHARGE, DEFAULT_BETA, FOUR_PI, GRADIENT, POTENTIAL,
                          KdPartition, SourceTree, _check_singular,
                          evaluate_dense)

DENSE_PAIR_LIMIT = 2_000_000

AREA = 'area'
CONF = 'conf'


@dataclass(frozen=True, eq=False)
class StageBaseline:
    """a and c at the start of an optimization stage"""
    a_baseline: np.ndarray
    c_baseline: np.ndarray
    effective_sum: float

    @classmethod
    def capture(cls, cloud):
        a = np.array(cloud.area_weights)
        c = np.array(cloud.confidences)
        a.setflags(write=False)
        c.setflags(write=False)
        return cls(a, c, float(np.sum(a * c)))


@dataclass(frozen=True)
class EnergyBreakdown:
    e_diri: float
    e_surf: float
    e_area: float
    e_conf: float
    total: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def area_energy(cloud, baseline):
    """|sum a_i c_i - sum a_i^b c_i^b|"""
    return abs(float(np.sum(cloud.effective_weights)) -
               baseline.effective_sum)


def conf_energy(cloud):
    c = cloud.confidences
    return float(np.sum(np.abs(c * (1.0 - c))))


def _surface_term(values):
    values = np.asarray(values, dtype=float)
    return float(np.mean((values - 0.5) ** 2))


def _moments(cloud):
    return cloud.effective_weights[:, None] * cloud.normals


def dirichlet_energy(cloud, grid, evaluator=None):
    """Discrete Dirichlet energy sum_q delta_q V_c |grad w(q)|^2

    Parameters
    ----------
    cloud: PointCloud
        Current state.
    grid: EnergyGrid
        Samples built against the current high-confidence set.
    evaluator: WindingEvaluator, optional
        Tree over `cloud`; the exact double loop is used otherwise.

    Returns
    -------
    float
    """
    if evaluator is not None:
        evaluator.check(cloud)
        g = evaluator.gradient(grid.positions)
    else:
        g = evaluate_dense(GRADIENT, cloud.positions, _moments(cloud),
                           grid.positions)
    return float(np.sum(grid.weights * np.einsum('ij,ij->i', g, g)))


def surface_energy(cloud, evaluator=None, tau_in=0.9, high_confidence=None):
    """Mean squared deviation from 1/2 of the field at high-confidence points

    The field at p_i leaves out point i's own term.

    Parameters
    ----------
    cloud: PointCloud
        Current state.
    evaluator: WindingEvaluator, optional
        Tree over `cloud`; the exact double loop is used otherwise.
    tau_in: float
        Confidence threshold defining the high-confidence set.
    high_confidence: np.ndarray, optional
        Explicit boolean mask, overrides `tau_in`.

    Raises
    ------
    EmptyHighConfidenceSet
        If no point is in the high-confidence set.
    """
    if high_confidence is None:
        high_confidence = cloud.high_confidence(tau_in)
    ids = np.flatnonzero(high_confidence)
    if not len(ids):
        raise EmptyHighConfidenceSet('No point has a confidence of at least '
                                     '%g' % tau_in)

    if evaluator is not None:
        evaluator.check(cloud)
        values = evaluator.winding(cloud.positions[ids], exclude=ids)
    else:
        values = evaluate_dense(POTENTIAL, cloud.positions, _moments(cloud),
                                cloud.positions[ids], exclude=ids)
    return _surface_term(values)


def _field_kernel(positions, normals, queries):
    """(m, n, 3) gradients at every query of every unit-weight dipole"""
    d = positions[None, :, :] - queries[:, None, :]
    r2 = np.einsum('ijk,ijk->ij', d, d)
    _check_singular(r2, 0.0, 0)
    inv_r3 = r2 ** -1.5
    nd = np.einsum('ijk,jk->ij', d, normals)
    return (-normals[None, :, :] * inv_r3[..., None] +
            3.0 * (nd * inv_r3 / r2)[..., None] * d) / FOUR_PI


def _potential_kernel(positions, normals, ids):
    """(k, n) potentials at p_ids of every unit-weight dipole, self left out"""
    d = positions[None, :, :] - positions[ids][:, None, :]
    r2 = np.einsum('ijk,ijk->ij', d, d)
    r2[np.arange(len(ids)), ids] = np.inf
    _check_singular(r2, 0.0, 0)
    return np.einsum('ijk,jk->ij', d, normals) * r2 ** -1.5 / FOUR_PI


class EnergyModel(object):
    """Objectives and gradients for fixed positions, normals and grid

    Only a and c may change between calls; the model raises StaleTree when
    handed a cloud with other normals.

    Parameters
    ----------
    cloud: PointCloud
        Positions and normals to build the model for.
    grid: EnergyGrid
        Dirichlet samples. Its high-confidence mask also defines the set
        used by the surface term.
    beta: float
        Far-field ratio of the tree path.
    dense_pair_limit: int
        Largest number of point/sample pairs for which kernels are cached
        densely instead of evaluated with trees.
    partition: KdPartition, optional
        Partition of the cloud positions to reuse.
    threads: int, optional
        Worker threads for tree evaluation.
    """
    def __init__(self, cloud, grid, beta=DEFAULT_BETA,
                 dense_pair_limit=DENSE_PAIR_LIMIT, partition=None,
                 threads=None):
        if len(grid.high_confidence) != len(cloud):
            raise ValueError('The grid was built for %d points, the cloud has'
                             ' %d' % (len(grid.high_confidence), len(cloud)))

        self.positions = cloud.positions
        self.normals = cloud.normals
        self.grid = grid
        self.surface_ids = np.flatnonzero(grid.high_confidence)
        self.beta = beta
        self.threads = threads

        n = len(cloud)
        pairs = n * max(len(grid), len(self.surface_ids))
        self.dense = pairs <= dense_pair_limit

        if self.dense:
            self._field = _field_kernel(self.positions, self.normals,
                                        grid.positions)
            self._potential = _potential_kernel(self.positions, self.normals,
                                                self.surface_ids)
        else:
            self.partition = (KdPartition(self.positions) if partition is None
                              else partition)
            self.grid_partition = KdPartition(grid.positions)

    def check(self, cloud):
        if (len(cloud) != len(self.positions) or
                not np.array_equal(cloud.normals, self.normals) or
                not np.array_equal(cloud.positions, self.positions)):
            raise StaleTree('The energy model was built for different '
                            'positions or normals, rebuild it')

    def field_gradients(self, e):
        """grad w at every grid sample for effective weights `e`"""
        if self.dense:
            return np.einsum('qij,i->qj', self._field, e)
        tree = SourceTree(self.positions, moments=e[:, None] * self.normals,
                          partition=self.partition)
        return tree.evaluate(GRADIENT, self.grid.positions, self.beta,
                             threads=self.threads)

    def surface_values(self, e):
        """Self-excluded w at the high-confidence points"""
        ids = self.surface_ids
        if not len(ids):
            raise EmptyHighConfidenceSet('The high-confidence set of this '
                                         'stage is empty')
        if self.dense:
            return self._potential @ e
        tree = SourceTree(self.positions, moments=e[:, None] * self.normals,
                          partition=self.partition)
        return tree.evaluate(POTENTIAL, self.positions[ids], self.beta,
                             exclude=ids, threads=self.threads)

    def _dirichlet_gradient(self, g):
        adjoint = self.grid.weights[:, None] * g
        if self.dense:
            return 2.0 * np.einsum('qj,qij->i', adjoint, self._field)
        tree = SourceTree(self.grid.positions, moments=adjoint,
                          partition=self.grid_partition)
        field = tree.evaluate(GRADIENT, self.positions, self.beta,
                              threads=self.threads)
        return 2.0 * np.einsum('ij,ij->i', self.normals, field)

    def _surface_gradient(self, w):
        charges = 2.0 * (w - 0.5) / len(self.surface_ids)
        if self.dense:
            return self._potential.T @ charges
        all_charges = np.zeros(len(self.positions))
        all_charges[self.surface_ids] = charges
        tree = SourceTree(self.positions, charges=all_charges,
                          partition=self.partition)
        field = tree.evaluate(CHARGE, self.positions, self.beta,
                              exclude=np.arange(len(self.positions)),
                              threads=self.threads)
        return np.einsum('ij,ij->i', self.normals, field)

    def evaluate(self, cloud, baseline, stage, lambdas, gradient=True):
        """Objective of one subproblem and optionally its gradient

        Parameters
        ----------
        cloud: PointCloud
            Current a and c; positions and normals must match the model.
        baseline: StageBaseline
            Stage-start snapshot for the area term.
        stage: str
            'area' for the area-weight objective with (lambda1, lambda2),
            'conf' for the confidence objective with (lambda3, lambda4,
            lambda5).
        lambdas: tuple of float
            Weights of the active terms.
        gradient: bool
            Also return the gradient with respect to a ('area') or c
            ('conf').

        Returns
        -------
        EnergyBreakdown or (EnergyBreakdown, np.ndarray)
        """
        self.check(cloud)
        if stage == AREA:
            l_surf, l_area = lambdas
            l_conf = 0.0
        elif stage == CONF:
            l_surf, l_area, l_conf = lambdas
        else:
            raise ValueError('Unknown stage "%s"' % stage)

        e = cloud.effective_weights
        g = self.field_gradients(e)
        w = self.surface_values(e)

        e_diri = float(np.sum(self.grid.weights * np.einsum('ij,ij->i', g, g)))
        e_surf = _surface_term(w)
        e_area = area_energy(cloud, baseline)
        e_conf = conf_energy(cloud)

        total = e_diri + l_surf * e_surf + l_area * e_area + l_conf * e_conf
        breakdown = EnergyBreakdown(e_diri, e_surf, e_area, e_conf, total)
        if not gradient:
            return breakdown

        # subgradient of |x| is 0 at x = 0
        deviation = float(np.sum(e)) - baseline.effective_sum
        de = (self._dirichlet_gradient(g) + l_surf * self._surface_gradient(w)
              + l_area * np.sign(deviation))

        if stage == AREA:
            grad = cloud.confidences * de
        else:
            # the absolute value in E_conf is redundant on [0, 1]
            grad = (cloud.area_weights * de +
                    l_conf * (1.0 - 2.0 * cloud.confidences))
        return breakdown, grad


def _model(cloud, grid, model):
    if model is None:
        return EnergyModel(cloud, grid)
    return model


def objective_area(cloud, grid, baseline, lambda1, lambda2, model=None):
    """E_diri + lambda1 E_surf + lambda2 E_area"""
    return _model(cloud, grid, model).evaluate(
        cloud, baseline, AREA, (lambda1, lambda2), gradient=False)


def objective_conf(cloud, grid, baseline, lambda3, lambda4, lambda5,
                   model=None):
    """E_diri + lambda3 E_surf + lambda4 E_area + lambda5 E_conf"""
    return _model(cloud, grid, model).evaluate(
        cloud, baseline, CONF, (lambda3, lambda4, lambda5), gradient=False)


def grad_area(cloud, grid, baseline, lambda1, lambda2, model=None):
    """Gradient of `objective_area` with respect to the area weights"""
    return _model(cloud, grid, model).evaluate(
        cloud, baseline, AREA, (lambda1, lambda2))[1]


def grad_conf(cloud, grid, baseline, lambda3, lambda4, lambda5, model=None):
    """Gradient of `objective_conf` with respect to the confidences"""
    return _model(cloud, grid, model).evaluate(
        cloud, baseline, CONF, (lambda3, lambda4, lambda5))[1]
