"""
Spatial smoothing of coefficient fields.

Both smoothers are linear: a sparse V x V operator C with row v holding the
weights c_vu, applied to the V x P coefficient matrix as C @ B. Because OLS
is linear in the responses, fitting OLS to responses smoothed with the same
weights (Y C') gives C @ B_ols exactly.
"""
from collections import namedtuple
import logging

import numpy as np
from scipy import linalg, sparse
from scipy.spatial.distance import cdist

from voxreg.closed_form import CoefficientField, ols_fit, predict
from voxreg.constants import BANDWIDTH_FACTORS, GAMMA_GRID, RADIUS_FACTORS, SEED_SMOOTHING
from voxreg.errors import InvalidParameterError, SingularSystemError
from voxreg.folds import inner_split
from voxreg.scoring import voxel_accuracies, zero_shot_pairs
from voxreg.util import derived_rng

logger = logging.getLogger(__name__)

KERNELS = ('uniform', 'gaussian')

SmoothingSpec = namedtuple('SmoothingSpec', ['kind', 'p', 'radii', 'gamma', 'kernel', 'bandwidth'])


def ball_spec(radii, p=2):
    return SmoothingSpec(kind='ball', p=p, radii=radii, gamma=None, kernel=None, bandwidth=None)


def roi_spec(gamma, kernel='uniform', bandwidth=None):
    return SmoothingSpec(kind='roi', p=None, radii=None, gamma=gamma, kernel=kernel, bandwidth=bandwidth)


def check_spec(spec, n_voxels):
    """Validate a spec, broadcasting ball radii to one per voxel."""
    if spec.kind == 'ball':
        if spec.p not in (1, 2):
            raise InvalidParameterError('Ball norm must be 1 or 2, got {}'.format(spec.p))
        radii = np.broadcast_to(np.asarray(spec.radii, dtype=float), (n_voxels,)).copy()
        if np.any(~np.isfinite(radii)) or np.any(radii < 0):
            raise InvalidParameterError('Smoothing radii must be finite and non-negative')
        return spec._replace(radii=radii)
    if spec.kind == 'roi':
        if spec.gamma is None or not spec.gamma >= 0:
            raise InvalidParameterError('gamma must be non-negative, got {}'.format(spec.gamma))
        if spec.kernel not in KERNELS:
            raise InvalidParameterError('Unknown ROI kernel {!r}'.format(spec.kernel))
        if spec.kernel == 'gaussian' and not (spec.bandwidth is not None and spec.bandwidth > 0):
            raise InvalidParameterError('Gaussian kernel needs a positive bandwidth')
        return spec
    raise InvalidParameterError('Unknown smoothing kind {!r}'.format(spec.kind))


def default_radius_grid(geometry):
    return np.asarray(RADIUS_FACTORS, dtype=float) * float(np.min(geometry.spacing))


def default_bandwidth_grid(geometry):
    return np.asarray(BANDWIDTH_FACTORS, dtype=float) * float(np.min(geometry.spacing))


def ball_weights(geometry, p, radii, tree=None):
    """Row-stochastic CSR matrix averaging each voxel over its l_p ball."""
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (geometry.n_voxels,))
    tree = tree if tree is not None else geometry.tree()
    neighbors = tree.query_ball_point(geometry.physical, radii, p=p)
    sizes = np.array([len(n) for n in neighbors])
    rows = np.repeat(np.arange(geometry.n_voxels), sizes)
    cols = np.concatenate([np.asarray(n, dtype=np.int64) for n in neighbors])
    vals = np.repeat(1.0 / sizes, sizes)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(geometry.n_voxels,) * 2)


def area_laplacian(points, kernel='uniform', bandwidth=None):
    """Omega = 2 (D - Q) over one area's voxel positions (mm)."""
    n = len(points)
    if kernel == 'uniform':
        q = np.ones((n, n))
    else:
        q = np.exp(-cdist(points, points, 'sqeuclidean') / bandwidth ** 2)
    np.fill_diagonal(q, 0.0)
    return 2.0 * (np.diag(q.sum(axis=1)) - q)


def roi_weights(geometry, partition, gamma, kernel='uniform', bandwidth=None):
    """Block-diagonal CSR matrix holding (I + gamma Omega_A)^-1 for each area."""
    physical = geometry.physical
    rows, cols, vals = [], [], []
    for label, members in partition.areas:
        n = len(members)
        system = np.eye(n) + gamma * area_laplacian(physical[members], kernel, bandwidth)
        try:
            inverse = linalg.cho_solve(linalg.cho_factor(system), np.eye(n))
        except linalg.LinAlgError as e:
            raise SingularSystemError('Smoothing system of area {} is not positive definite'.format(label)) from e
        rows.append(np.repeat(members, n))
        cols.append(np.tile(members, n))
        vals.append(inverse.ravel())
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(geometry.n_voxels,) * 2)


def apply_weights(field, weights, tag):
    """
    Smooth a field with operator C: coefficients C B, intercepts C b0 and
    std errors sqrt(C^2 var), the latter flagged approximate.
    """
    squared = weights.multiply(weights)
    return CoefficientField(coefficients=weights @ field.coefficients,
                            std_errors=np.sqrt(squared @ field.std_errors ** 2),
                            noise_variance=squared @ field.noise_variance,
                            method='{}+{}'.format(field.method, tag),
                            intercepts=weights @ field.intercepts,
                            approximate=True)


def smooth_ball(field, geometry, spec):
    spec = check_spec(spec, geometry.n_voxels)
    if spec.kind != 'ball':
        raise InvalidParameterError('smooth_ball needs a ball spec')
    return apply_weights(field, ball_weights(geometry, spec.p, spec.radii), 'ball')


def smooth_roi(field, geometry, partition, spec):
    spec = check_spec(spec, geometry.n_voxels)
    if spec.kind != 'roi':
        raise InvalidParameterError('smooth_roi needs an roi spec')
    weights = roi_weights(geometry, partition, spec.gamma, spec.kernel, spec.bandwidth)
    return apply_weights(field, weights, 'roi')


def smoothing_operator(dataset, spec):
    spec = check_spec(spec, dataset.n_voxels)
    if spec.kind == 'ball':
        return ball_weights(dataset.geometry, spec.p, spec.radii)
    return roi_weights(dataset.geometry, dataset.rois, spec.gamma, spec.kernel, spec.bandwidth)


def smooth_field(field, dataset, spec):
    """Smooth any estimator's field with the operator `spec` defines on `dataset`."""
    return apply_weights(field, smoothing_operator(dataset, spec), check_spec(spec, dataset.n_voxels).kind)


def smoothed_ols(dataset, spec):
    """OLS on responses smoothed across voxels: ybar_v = sum_u c_vu y_u."""
    weights = smoothing_operator(dataset, spec)
    smoothed = np.asarray((weights @ dataset.responses.T).T)
    field = ols_fit(dataset.with_responses(smoothed))
    return field._replace(method='ols+smoothed-response')


def _validation_setup(dataset, estimator, split, seed):
    if split is None:
        split = inner_split(np.arange(dataset.n_rows), seed, contiguous=dataset.is_dynamic)
    train, validation = split
    field = estimator(dataset.take_rows(train))
    pairs, _ = zero_shot_pairs(len(validation), derived_rng(seed, SEED_SMOOTHING))
    return field, dataset.design[validation], dataset.responses[validation], pairs


def select_radius(dataset, estimator, grid=None, split=None, seed=0, p=2):
    """
    Per-voxel radius maximizing single-voxel zero-shot accuracy on the
    validation rows.

    Args:
        estimator: callable mapping a training Dataset to a CoefficientField
        grid: candidate radii in mm, must include 0
        split: (inner-train rows, validation rows); drawn from `seed` if omitted
    Returns:
        V-vector of radii; ties go to the smallest radius
    """
    grid = default_radius_grid(dataset.geometry) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0 or not np.any(grid == 0):
        raise InvalidParameterError('Radius grid must be nonempty and include 0')
    grid = np.unique(grid)
    field, X_val, Y_val, pairs = _validation_setup(dataset, estimator, split, seed)
    tree = dataset.geometry.tree()
    scores = np.empty((len(grid), dataset.n_voxels))
    for g, radius in enumerate(grid):
        smoothed = apply_weights(field, ball_weights(dataset.geometry, p, radius, tree), 'ball')
        scores[g] = voxel_accuracies(predict(smoothed, X_val), Y_val, pairs)
    radii = grid[np.argmax(np.nan_to_num(scores, nan=-1.0), axis=0)]
    logger.info('Selected radii: %d of %d voxels smoothed', np.count_nonzero(radii), len(radii))
    return radii


def select_roi_params(dataset, estimator, gamma_grid=GAMMA_GRID, bandwidth_grid=None, kernel='uniform',
                      split=None, seed=0):
    """
    Global (gamma, bandwidth) maximizing mean single-voxel validation
    accuracy. Ties go to the smaller gamma, then the smaller bandwidth;
    the bandwidth is None for the uniform kernel.
    """
    if kernel == 'uniform':
        bandwidths = [None]
    else:
        bandwidths = sorted(default_bandwidth_grid(dataset.geometry) if bandwidth_grid is None else bandwidth_grid)
    gammas = sorted(gamma_grid)
    field, X_val, Y_val, pairs = _validation_setup(dataset, estimator, split, seed)
    best, best_score = (gammas[0], bandwidths[0]), -np.inf
    for gamma in gammas:
        for bandwidth in bandwidths:
            weights = roi_weights(dataset.geometry, dataset.rois, gamma, kernel, bandwidth)
            acc = voxel_accuracies(predict(apply_weights(field, weights, 'roi'), X_val), Y_val, pairs)
            score = float(np.nanmean(acc)) if np.any(~np.isnan(acc)) else -np.inf
            if score > best_score:
                best, best_score = (gamma, bandwidth), score
    logger.info('Selected ROI smoothing gamma=%s bandwidth=%s (accuracy %.3f)', best[0], best[1], best_score)
    return best


def record_smoothing(reg_map, spec):
    """Note a resolved smoothing spec in a RegularizationMap."""
    if spec.kind == 'ball':
        return reg_map.with_values(smoothing_radius=spec.radii)
    return reg_map.with_metadata(roi_gamma=float(spec.gamma), roi_kernel=spec.kernel, roi_bandwidth=spec.bandwidth)
