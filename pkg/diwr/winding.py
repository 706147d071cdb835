"""Parameterized generalized winding number field

    w(q) = sum_i a_i c_i (p_i - q) . n_i / (4 pi |p_i - q|^3)

Exact evaluation is a chunked dense double loop. Fast evaluation walks a
kd-partition of the sources and replaces well separated nodes by a
second-order Taylor expansion of their sources about the node centroid.

The same tree also evaluates the point-charge field

    E(x) = sum_j s_j (x - p_j) / (4 pi |x - p_j|^3)

which the energy gradients need. All kernels accept an optional smoothing
width `eps` that replaces |d|^2 by |d|^2 + eps^2; eps = 0 is the exact
field.
"""
import json

import numpy as np
import pandas as pd

from diwr.exceptions import SingularQuery, StaleTree
from diwr.parallel import concat_chunks

FOUR_PI = 4.0 * np.pi

# queries closer than this to a source are singular
SINGULAR_DISTANCE = 1e-12

DEFAULT_BETA = 2.0
DEFAULT_LEAF_SIZE = 32
# highest source moment kept in the far-field expansion
DEFAULT_ORDER = 2

# bound on the number of source/query pairs held in memory per chunk
_PAIRS_PER_CHUNK = 1 << 20

POTENTIAL = 'potential'
GRADIENT = 'gradient'
CHARGE = 'charge'
_KINDS = (POTENTIAL, GRADIENT, CHARGE)


def _as_queries(q):
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    return q.reshape(-1, 3), single


def _kernel(kind, d, r2, sources):
    """Evaluate a kernel given d = p - x and the (smoothed) squared length

    `sources` holds dipole moments (..., 3) or charges (...,) broadcastable
    against `d`.
    """
    inv_r3 = r2 ** -1.5
    if kind == POTENTIAL:
        return np.sum(d * sources, axis=-1) * inv_r3 / FOUR_PI
    if kind == GRADIENT:
        md = np.sum(d * sources, axis=-1)
        inv_r5 = inv_r3 / r2
        return ((-sources * inv_r3[..., None]) +
                3.0 * (md * inv_r5)[..., None] * d) / FOUR_PI
    # field points away from positive charges
    return -d * (sources * inv_r3)[..., None] / FOUR_PI


def _expansion(kind, d, r2, terms, order=DEFAULT_ORDER):
    """Taylor expansion of a node's kernel about its centroid

    Parameters
    ----------
    kind: str
        'potential', 'gradient' or 'charge'.
    d: np.ndarray
        (m, 3) centroid minus query.
    r2: np.ndarray
        (m,) smoothed squared lengths of `d`.
    terms: tuple
        Zeroth, first and second moments of the node about its centroid:
        (3,), (3, 3) and (3, 3, 3) for dipoles, where the first index is
        the moment component; (), (3,) and (3, 3) for charges.
    order: int
        Highest moment used, 0 to 2.
    """
    inv_r2 = 1.0 / r2
    inv_r3 = r2 ** -1.5

    if kind == CHARGE:
        total, first, second = terms
        out = -d * (total * inv_r3)[:, None]
        if order >= 1:
            cd = d @ first
            out += (3.0 * d * cd[:, None] - r2[:, None] * first) * \
                (inv_r3 * inv_r2)[:, None]
        if order >= 2:
            sd = d @ second
            dsd = np.einsum('ij,ij->i', sd, d)
            out -= 0.5 * (15.0 * d * dsd[:, None] - 3.0 * r2[:, None] *
                          (d * np.trace(second) + 2.0 * sd)) * \
                (inv_r3 * inv_r2 ** 2)[:, None]
        return out / FOUR_PI

    moment, first, second = terms
    md = np.sum(d * moment, axis=-1)
    if order >= 1:
        dtd = np.einsum('ij,jk,ik->i', d, first, d)
        trace = np.trace(first)
    if order >= 2:
        q1 = np.einsum('jkk->j', second)
        q2 = np.einsum('jjk->k', second)
        qddd = np.einsum('jkl,ij,ik,il->i', second, d, d, d)
        qd = d @ q1 + 2.0 * (d @ q2)

    if kind == POTENTIAL:
        out = md * inv_r3
        if order >= 1:
            out -= (3.0 * dtd - r2 * trace) * inv_r3 * inv_r2
        if order >= 2:
            out += 0.5 * (15.0 * qddd - 3.0 * r2 * qd) * inv_r3 * inv_r2 ** 2
        return out / FOUR_PI

    out = (3.0 * d * md[:, None] - r2[:, None] * moment) * \
        (inv_r3 * inv_r2)[:, None]
    if order >= 1:
        out -= (15.0 * d * dtd[:, None] - 3.0 * r2[:, None] *
                (d * trace + d @ first.T + d @ first)) * \
            (inv_r3 * inv_r2 ** 2)[:, None]
    if order >= 2:
        u = np.einsum('jki,mj,mk->mi', second, d, d)
        v = np.einsum('ikl,mk,ml->mi', second, d, d)
        out += 0.5 * (105.0 * d * qddd[:, None] - 15.0 * r2[:, None] *
                      (d * qd[:, None] + 2.0 * u + v) +
                      3.0 * (r2 ** 2)[:, None] * (q1 + 2.0 * q2)) * \
            (inv_r3 * inv_r2 ** 3)[:, None]
    return out / FOUR_PI


def _check_singular(r2, eps, offset):
    if eps > 0:
        return
    closest = np.min(r2, axis=1) if r2.shape[1] else np.full(len(r2), np.inf)
    bad = np.flatnonzero(closest < SINGULAR_DISTANCE ** 2)
    if len(bad):
        raise SingularQuery('Query %d coincides with a source point (distance'
                            ' %g), exclude that source or offset the query'
                            % (offset + bad[0], np.sqrt(closest[bad[0]])))


def evaluate_dense(kind, positions, sources, queries, eps=0.0, exclude=None,
                   threads=None):
    """Exact double loop over sources and queries

    Parameters
    ----------
    kind: str
        One of 'potential' (winding number), 'gradient' (spatial gradient
        of the winding number) or 'charge' (point-charge field).
    positions: np.ndarray
        (n, 3) source positions.
    sources: np.ndarray
        (n, 3) dipole moments for 'potential' and 'gradient', (n,) charges
        for 'charge'.
    queries: np.ndarray
        (m, 3) query positions.
    eps: float
        Smoothing width, 0 for the exact kernel.
    exclude: np.ndarray, optional
        (m,) index of one source to leave out of each query's sum, -1 for
        none. Used for self-excluded evaluation at the source points.
    threads: int, optional
        Worker threads.

    Returns
    -------
    np.ndarray
        (m,) values for 'potential', (m, 3) otherwise.

    Raises
    ------
    SingularQuery
        If eps is 0 and a query coincides with a non-excluded source.
    """
    positions = np.asarray(positions, dtype=float)
    sources = np.asarray(sources, dtype=float)
    queries = np.asarray(queries, dtype=float).reshape(-1, 3)
    n, m = len(positions), len(queries)
    eps2 = float(eps) ** 2
    shape = (m, ) if kind == POTENTIAL else (m, 3)

    if n == 0 or m == 0:
        return np.zeros(shape)

    if kind == CHARGE:
        src = sources[None, :]
    else:
        src = sources[None, :, :]

    def work(start, stop):
        d = positions[None, :, :] - queries[start:stop, None, :]
        r2 = np.einsum('ijk,ijk->ij', d, d)
        if exclude is not None:
            ex = exclude[start:stop]
            rows = np.flatnonzero(ex >= 0)
            r2[rows, ex[rows]] = np.inf
        _check_singular(r2, eps, start)
        r2 += eps2
        values = _kernel(kind, d, r2, src)
        return values.sum(axis=1)

    chunk = max(1, _PAIRS_PER_CHUNK // n)
    return concat_chunks(work, m, chunk, threads).reshape(shape)


def _moments(cloud):
    return cloud.effective_weights[:, None] * cloud.normals


def eval_exact(cloud, q, eps=0.0):
    """Winding number of the cloud at one or many query points

    Parameters
    ----------
    cloud: PointCloud
        Positions and theta = (normals, area weights, confidences).
    q: array_like
        A 3-vector or an (m, 3) array of queries.
    eps: float
        Smoothing width, 0 for the exact field.

    Returns
    -------
    float or np.ndarray
        Scalar for a single query, (m,) array otherwise.

    Raises
    ------
    SingularQuery
        If a query lies within 1e-12 of a point.
    """
    queries, single = _as_queries(q)
    out = evaluate_dense(POTENTIAL, cloud.positions, _moments(cloud),
                         queries, eps)
    return float(out[0]) if single else out


def grad_q(cloud, q, eps=0.0):
    """Analytic gradient of the winding number with respect to the query"""
    queries, single = _as_queries(q)
    out = evaluate_dense(GRADIENT, cloud.positions, _moments(cloud),
                         queries, eps)
    return out[0] if single else out


def kernel_values(cloud, q):
    """K_i(q) = (p_i - q) . n_i / (4 pi |p_i - q|^3) for every point i"""
    d = cloud.positions - np.asarray(q, dtype=float)[None, :]
    r2 = np.einsum('ij,ij->i', d, d)
    _check_singular(r2[None, :], 0.0, 0)
    return np.einsum('ij,ij->i', d, cloud.normals) * r2 ** -1.5 / FOUR_PI


def partial_derivs(cloud, q):
    """Derivatives of w(q) with respect to every a_i, c_i and n_i

    Parameters
    ----------
    cloud: PointCloud
        Cloud defining the field.
    q: array_like
        Query 3-vector.

    Returns
    -------
    pd.DataFrame
        One row per point with columns dw_da, dw_dc, dw_dnx, dw_dny and
        dw_dnz.
    """
    d = cloud.positions - np.asarray(q, dtype=float)[None, :]
    r2 = np.einsum('ij,ij->i', d, d)
    _check_singular(r2[None, :], 0.0, 0)
    geometric = d * (r2 ** -1.5 / FOUR_PI)[:, None]
    kernel = np.einsum('ij,ij->i', geometric, cloud.normals)
    dn = cloud.effective_weights[:, None] * geometric

    return pd.DataFrame({'dw_da': cloud.confidences * kernel,
                         'dw_dc': cloud.area_weights * kernel,
                         'dw_dnx': dn[:, 0], 'dw_dny': dn[:, 1],
                         'dw_dnz': dn[:, 2]})


class KdPartition(object):
    """Hierarchical split of a point set, independent of any weights

    Nodes are stored in pre-order, so every child has a larger index than
    its parent. Each node covers the contiguous range ``start:stop`` of
    `order`.

    Parameters
    ----------
    positions: np.ndarray
        (n, 3) points to partition.
    leaf_size: int
        Maximum number of points in a leaf.
    """
    def __init__(self, positions, leaf_size=DEFAULT_LEAF_SIZE):
        self.positions = np.asarray(positions, dtype=float)
        self.leaf_size = int(leaf_size)
        if self.leaf_size < 1:
            raise ValueError('leaf_size must be positive, got %d' % leaf_size)

        self.order = np.arange(len(self.positions))
        starts, stops, lefts, rights = [], [], [], []

        # explicit stack, recursion depth would grow with n for clustered
        # inputs
        pending = [(0, len(self.positions), -1, None)]
        while pending:
            start, stop, parent, side = pending.pop()
            node = len(starts)
            starts.append(start)
            stops.append(stop)
            lefts.append(-1)
            rights.append(-1)
            if parent >= 0:
                (lefts if side == 0 else rights)[parent] = node

            if stop - start <= self.leaf_size:
                continue

            ids = self.order[start:stop]
            pts = self.positions[ids]
            axis = int(np.argmax(np.ptp(pts, axis=0)))
            half = (stop - start) // 2
            ids = ids[np.argpartition(pts[:, axis], half, kind='introselect')]
            self.order[start:stop] = ids

            # right is pushed first so the left subtree gets lower indices
            pending.append((start + half, stop, node, 1))
            pending.append((start, start + half, node, 0))

        self.start = np.array(starts, dtype=np.int64)
        self.stop = np.array(stops, dtype=np.int64)
        self.left = np.array(lefts, dtype=np.int64)
        self.right = np.array(rights, dtype=np.int64)

    def __len__(self):
        return len(self.start)

    def is_leaf(self, node):
        return self.left[node] < 0


class SourceTree(object):
    """Aggregated sources over a KdPartition for far-field evaluation

    Each node caches the total centroid weight, the weighted centroid, a
    bounding radius around that centroid, its bounding box, and the
    zeroth, first and second moments of its dipoles and charges about the
    centroid.

    Parameters
    ----------
    positions: np.ndarray
        (n, 3) source positions.
    moments: np.ndarray, optional
        (n, 3) dipole moments.
    charges: np.ndarray, optional
        (n,) point charges.
    weights: np.ndarray, optional
        (n,) non-negative centroid weights. Defaults to the moment norms or
        the absolute charges.
    leaf_size: int
        Leaf capacity, ignored when `partition` is given.
    partition: KdPartition, optional
        Reuse the geometric split of an earlier tree over the same points.
    expansion_order: int
        Highest source moment used by the far field, 0 to 2.
    """
    def __init__(self, positions, moments=None, charges=None, weights=None,
                 leaf_size=DEFAULT_LEAF_SIZE, partition=None,
                 expansion_order=DEFAULT_ORDER):
        self.positions = np.asarray(positions, dtype=float)
        n = len(self.positions)
        self.expansion_order = int(expansion_order)
        if not 0 <= self.expansion_order <= 2:
            raise ValueError('The expansion order must be 0, 1 or 2, got %d'
                             % expansion_order)

        if moments is None and charges is None:
            raise ValueError('A source tree needs moments or charges')
        self.moments = (None if moments is None else
                        np.asarray(moments, dtype=float).reshape(n, 3))
        self.charges = (None if charges is None else
                        np.asarray(charges, dtype=float).reshape(n))

        if weights is None:
            weights = np.zeros(n)
            if self.moments is not None:
                weights = weights + np.linalg.norm(self.moments, axis=1)
            if self.charges is not None:
                weights = weights + np.abs(self.charges)
        self.weights = np.asarray(weights, dtype=float).reshape(n)

        if partition is None:
            partition = KdPartition(self.positions, leaf_size)
        elif len(partition.positions) != n:
            raise ValueError('The partition was built over %d points but %d '
                             'sources were given' %
                             (len(partition.positions), n))
        self.partition = partition
        self._aggregate()

    def _aggregate(self):
        part = self.partition
        count = len(part)
        ordered = self.positions[part.order]
        w = self.weights[part.order]

        self.node_weight = np.zeros(count)
        self.node_count = np.zeros(count)
        self.node_moment = np.zeros((count, 3))
        self.node_charge = np.zeros(count)
        self.centroid = np.zeros((count, 3))
        self.radius = np.zeros(count)
        self.lower = np.zeros((count, 3))
        self.upper = np.zeros((count, 3))
        self.node_moment1 = np.zeros((count, 3, 3))
        self.node_moment2 = np.zeros((count, 3, 3, 3))
        self.node_charge1 = np.zeros((count, 3))
        self.node_charge2 = np.zeros((count, 3, 3))
        wsum = np.zeros((count, 3))
        psum = np.zeros((count, 3))

        for node in range(count - 1, -1, -1):
            left, right = part.left[node], part.right[node]
            if left < 0:
                start, stop = part.start[node], part.stop[node]
                pts = ordered[start:stop]
                self.node_weight[node] = w[start:stop].sum()
                self.node_count[node] = stop - start
                wsum[node] = (w[start:stop, None] * pts).sum(axis=0)
                psum[node] = pts.sum(axis=0)
                ids = part.order[start:stop]
                if self.moments is not None:
                    self.node_moment[node] = self.moments[ids].sum(axis=0)
                if self.charges is not None:
                    self.node_charge[node] = self.charges[ids].sum()
            else:
                for attr in ('node_weight', 'node_count', 'node_moment',
                             'node_charge'):
                    values = getattr(self, attr)
                    values[node] = values[left] + values[right]
                wsum[node] = wsum[left] + wsum[right]
                psum[node] = psum[left] + psum[right]

            if self.node_weight[node] > 0:
                self.centroid[node] = wsum[node] / self.node_weight[node]
            elif self.node_count[node] > 0:
                self.centroid[node] = psum[node] / self.node_count[node]

            if left < 0:
                pts = ordered[part.start[node]:part.stop[node]]
                if len(pts):
                    self.radius[node] = np.sqrt(np.max(np.sum(
                        (pts - self.centroid[node]) ** 2, axis=1)))
                    self.lower[node] = pts.min(axis=0)
                    self.upper[node] = pts.max(axis=0)
            else:
                # conservative bound from the children's spheres
                self.radius[node] = max(
                    np.linalg.norm(self.centroid[child] -
                                   self.centroid[node]) + self.radius[child]
                    for child in (left, right))
                self.lower[node] = np.minimum(self.lower[left],
                                              self.lower[right])
                self.upper[node] = np.maximum(self.upper[left],
                                              self.upper[right])

            if self.expansion_order:
                self._expansion_moments(node, ordered)

    def _expansion_moments(self, node, ordered):
        """First and second source moments about the node centroid"""
        part = self.partition
        start, stop = part.start[node], part.stop[node]
        ids = part.order[start:stop]
        delta = ordered[start:stop] - self.centroid[node]
        if self.moments is not None:
            m = self.moments[ids]
            self.node_moment1[node] = m.T @ delta
            if self.expansion_order > 1:
                self.node_moment2[node] = np.einsum('nj,nk,nl->jkl', m,
                                                    delta, delta)
        if self.charges is not None:
            s = self.charges[ids]
            self.node_charge1[node] = s @ delta
            if self.expansion_order > 1:
                self.node_charge2[node] = (delta * s[:, None]).T @ delta

    def _terms(self, kind, node):
        if kind == CHARGE:
            return (self.node_charge[node], self.node_charge1[node],
                    self.node_charge2[node])
        return (self.node_moment[node], self.node_moment1[node],
                self.node_moment2[node])

    def _sources(self, kind):
        if kind == CHARGE:
            if self.charges is None:
                raise ValueError('This tree holds no charges')
            return self.charges, self.node_charge
        if self.moments is None:
            raise ValueError('This tree holds no dipole moments')
        return self.moments, self.node_moment

    def evaluate(self, kind, queries, beta=DEFAULT_BETA, eps=0.0,
                 exclude=None, threads=None):
        """Evaluate a kernel at many queries

        Parameters
        ----------
        kind: str
            'potential', 'gradient' or 'charge'.
        queries: np.ndarray
            (m, 3) query positions.
        beta: float
            Far-field acceptance ratio. A node is used in aggregate form
            when the distance from the query to the node, outside both its
            bounding box and its bounding sphere, exceeds both beta times
            and once its radius. beta <= 0 disables the far field.
        eps: float
            Smoothing width.
        exclude: np.ndarray, optional
            (m,) source index left out of each query's sum, -1 for none.
        threads: int, optional
            Worker threads.

        Returns
        -------
        np.ndarray
            (m,) for 'potential', (m, 3) otherwise.
        """
        if kind not in _KINDS:
            raise ValueError('Unknown kernel "%s"' % kind)
        queries = np.asarray(queries, dtype=float).reshape(-1, 3)
        sources, _ = self._sources(kind)

        if beta <= 0:
            return evaluate_dense(kind, self.positions, sources, queries,
                                  eps, exclude, threads)

        if exclude is not None:
            exclude = np.asarray(exclude, dtype=np.int64).reshape(-1)

        def work(start, stop):
            return self._traverse(kind, queries[start:stop], beta, eps,
                                  None if exclude is None else
                                  exclude[start:stop], start)

        shape = (len(queries), ) if kind == POTENTIAL else (len(queries), 3)
        return concat_chunks(work, len(queries), 4096,
                             threads).reshape(shape)

    def _traverse(self, kind, queries, beta, eps, exclude, offset):
        part = self.partition
        sources, _ = self._sources(kind)
        eps2 = float(eps) ** 2
        m = len(queries)
        out = np.zeros((m, ) if kind == POTENTIAL else (m, 3))

        stack = [(0, np.arange(m))]
        while stack:
            node, idx = stack.pop()
            if not len(idx) or self.node_weight[node] == 0:
                continue

            q = queries[idx]
            d = self.centroid[node][None, :] - q
            dist2 = np.einsum('ij,ij->i', d, d)
            radius = self.radius[node]
            # distance to the node: outside both its box and its sphere
            box = (np.maximum(self.lower[node] - q, 0.0) +
                   np.maximum(q - self.upper[node], 0.0))
            gap = np.maximum(np.sqrt(np.einsum('ij,ij->i', box, box)),
                             np.sqrt(dist2) - radius)
            far = (gap > beta * radius) & (gap > radius)
            if far.any():
                out[idx[far]] += _expansion(kind, d[far], dist2[far] + eps2,
                                            self._terms(kind, node),
                                            self.expansion_order)
                idx = idx[~far]
                if not len(idx):
                    continue

            if part.left[node] >= 0:
                stack.append((part.right[node], idx))
                stack.append((part.left[node], idx))
                continue

            ids = part.order[part.start[node]:part.stop[node]]
            dd = self.positions[ids][None, :, :] - queries[idx][:, None, :]
            r2 = np.einsum('ijk,ijk->ij', dd, dd)
            if exclude is not None:
                r2[exclude[idx][:, None] == ids[None, :]] = np.inf
            _check_singular(r2, eps, offset)
            src = (sources[ids][None, :] if kind == CHARGE else
                   sources[ids][None, :, :])
            out[idx] += _kernel(kind, dd, r2 + eps2, src).sum(axis=1)

        return out

    def to_dict(self):
        part = self.partition
        return {'leaf_size': part.leaf_size,
                'nodes': [{'id': i,
                           'start': int(part.start[i]),
                           'stop': int(part.stop[i]),
                           'left': int(part.left[i]),
                           'right': int(part.right[i]),
                           'weight': float(self.node_weight[i]),
                           'dipole': [float(v) for v in self.node_moment[i]],
                           'charge': float(self.node_charge[i]),
                           'centroid': [float(v) for v in self.centroid[i]],
                           'radius': float(self.radius[i])}
                          for i in range(len(part))]}


class WindingEvaluator(object):
    """Tree-accelerated winding field over an immutable theta snapshot

    Parameters
    ----------
    cloud: PointCloud
        Snapshot of positions, normals, area weights and confidences.
    beta: float
        Far-field acceptance ratio, larger is more accurate. 0 disables the
        far field.
    eps: float
        Kernel smoothing width, 0 for the exact field.
    leaf_size: int
        Leaf capacity of the partition.
    partition: KdPartition, optional
        Geometric split to reuse; positions never change during
        optimization so the split can be shared across rebuilds.
    threads: int, optional
        Worker threads for batch evaluation.

    Attributes
    ----------
    generation: int
        Generation of the cloud the aggregates were built from.
    tree: SourceTree
        The aggregated dipole tree.
    """
    def __init__(self, cloud, beta=DEFAULT_BETA, eps=0.0,
                 leaf_size=DEFAULT_LEAF_SIZE, partition=None, threads=None):
        self.cloud = cloud
        self.beta = float(beta)
        self.eps = float(eps)
        self.threads = threads
        self.generation = cloud.generation
        self.tree = SourceTree(cloud.positions, moments=_moments(cloud),
                               weights=cloud.effective_weights,
                               leaf_size=leaf_size, partition=partition)

    @property
    def partition(self):
        return self.tree.partition

    def check(self, cloud):
        """Raise StaleTree if `cloud` moved on since the tree was built"""
        if cloud.generation != self.generation:
            raise StaleTree('The evaluator was built for generation %d but '
                            'the cloud is at generation %d, rebuild it' %
                            (self.generation, cloud.generation))

    def winding(self, queries, exclude=None):
        return self.tree.evaluate(POTENTIAL, queries, self.beta, self.eps,
                                  exclude, self.threads)

    def gradient(self, queries, exclude=None):
        return self.tree.evaluate(GRADIENT, queries, self.beta, self.eps,
                                  exclude, self.threads)

    def winding_at_points(self, indices=None):
        """Self-excluded winding numbers at the cloud's own points"""
        indices = (np.arange(len(self.cloud)) if indices is None else
                   np.asarray(indices))
        return self.winding(self.cloud.positions[indices], exclude=indices)

    def gradient_at_points(self, indices=None):
        """Self-excluded field gradients at the cloud's own points"""
        indices = (np.arange(len(self.cloud)) if indices is None else
                   np.asarray(indices))
        return self.gradient(self.cloud.positions[indices], exclude=indices)

    def to_json(self):
        """Dump the tree for inspection"""
        out = self.tree.to_dict()
        out.update({'beta': self.beta, 'eps': self.eps,
                    'generation': self.generation})
        return json.dumps(out)


def eval_fast(evaluator, q, cloud):
    """Far-field accelerated winding number

    Parameters
    ----------
    evaluator: WindingEvaluator
        Tree built over the current theta.
    q: array_like
        A 3-vector or an (m, 3) array of queries.
    cloud: PointCloud
        The current theta, checked against the evaluator's generation.

    Returns
    -------
    float or np.ndarray

    Raises
    ------
    StaleTree
        If the generation of `cloud` differs from the evaluator's.
    """
    evaluator.check(cloud)
    queries, single = _as_queries(q)
    out = evaluator.winding(queries)
    return float(out[0]) if single else out


def self_winding_numbers(cloud, indices=None, beta=0.0, eps=0.0,
                         evaluator=None):
    """Winding numbers at the cloud points, each excluding its own term

    Parameters
    ----------
    cloud: PointCloud
        Cloud defining the field.
    indices: array_like, optional
        Subset of points to evaluate at, all by default.
    beta: float
        Far-field ratio, ignored when `evaluator` is given.
    eps: float
        Smoothing width, ignored when `evaluator` is given.
    evaluator: WindingEvaluator, optional
        Prebuilt evaluator over `cloud`.
    """
    if evaluator is None:
        evaluator = WindingEvaluator(cloud, beta=beta, eps=eps)
    else:
        evaluator.check(cloud)
    return evaluator.winding_at_points(indices)
