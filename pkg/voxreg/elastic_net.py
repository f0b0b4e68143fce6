"""
Elastic net by cyclic coordinate descent, with per-voxel (lambda1, lambda2)
tuning by K-fold cross-validation.

The objective is RSS + l1 * ||b||_1 + l2 * ||b||_2^2. The solver works on
the Gram form (X'X, X'y) and updates every voxel at once, one coordinate at a
time in ascending order, so a whole voxel field is solved in one pass.
"""
from collections import namedtuple
import logging

import numpy as np

from voxreg.closed_form import CoefficientField, RegularizationMap
from voxreg.constants import DEFAULT_FOLDS, EN_L1_DECADES, EN_L1_POINTS, EN_L2_FACTORS
from voxreg.dataset import Dataset, RoiPartition, VoxelGeometry
from voxreg.errors import InvalidFoldsError, InvalidParameterError, NoConvergenceError

logger = logging.getLogger(__name__)

EnSolution = namedtuple('EnSolution', ['coefficients', 'intercept', 'sweeps'])

EnPath = namedtuple('EnPath', ['lambda1_grid', 'lambda2_grid', 'cv_error', 'selected'])
EnPath.__doc__ = """
Cross-validation surface for one voxel. cv_error[i, j] is the mean held-out
MSE at (lambda1_grid[i], lambda2_grid[j]); selected is the winning (i, j).
"""

Standardization = namedtuple('Standardization', ['x_mean', 'x_scale', 'y_mean'])


def standardize(design, responses, enabled=True):
    """Center columns and scale them to unit norm; center the responses."""
    X = np.asarray(design, dtype=float)
    Y = np.asarray(responses, dtype=float)
    if not enabled:
        std = Standardization(np.zeros(X.shape[1]), np.ones(X.shape[1]), np.zeros(Y.shape[1]))
        return X, Y, std
    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    scale = np.sqrt(np.sum(Xc ** 2, axis=0))
    scale = np.where(scale > 0, scale, 1.0)
    y_mean = Y.mean(axis=0)
    return Xc / scale, Y - y_mean, Standardization(x_mean, scale, y_mean)


def unstandardize(beta, std):
    """Map standardized coefficients (P x V) back to raw units and intercepts."""
    raw = beta / std.x_scale[:, None]
    return raw, std.y_mean - std.x_mean @ raw


def objective(design, response, beta, l1, l2):
    resid = np.asarray(response, dtype=float) - np.asarray(design, dtype=float) @ beta
    return float(resid @ resid + l1 * np.sum(np.abs(beta)) + l2 * beta @ beta)


def kkt_residual(design, response, beta, l1, l2):
    """
    Largest violation of the optimality conditions:
    2 x_j'(y - Xb) = l1 sign(b_j) + 2 l2 b_j for b_j != 0, and
    |2 x_j'(y - Xb)| <= l1 for b_j == 0.
    """
    X = np.asarray(design, dtype=float)
    beta = np.asarray(beta, dtype=float)
    grad = 2.0 * X.T @ (np.asarray(response, dtype=float) - X @ beta)
    active = beta != 0
    on = np.abs(grad - l1 * np.sign(beta) - 2.0 * l2 * beta)
    off = np.clip(np.abs(grad) - l1, 0.0, None)
    return float(np.max(np.where(active, on, off), initial=0.0))


def _coordinate_descent(gram, xty, l1, l2, beta, tol, max_iter):
    """
    Cyclic coordinate descent in Gram form for every column of `xty` at once.
    beta (P x V) is updated in place. Returns the number of sweeps.
    """
    diag = np.diag(gram)
    col_norm = np.sqrt(diag)
    scale = max(1.0, float(np.max(np.abs(xty), initial=0.0)))
    for sweep in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(gram.shape[0]):
            denom = diag[j] + l2
            old = beta[j].copy()
            rho = xty[j] - gram[j] @ beta + diag[j] * old
            new = np.sign(rho) * np.clip(2.0 * np.abs(rho) - l1, 0.0, None)
            new = np.divide(new, 2.0 * denom, out=np.zeros_like(new), where=denom > 0)
            beta[j] = new
            max_delta = max(max_delta, float(np.max(np.abs(new - old) * col_norm[j], initial=0.0)))
        if max_delta <= tol * scale:
            return sweep
    raise NoConvergenceError('Coordinate descent did not converge in {} sweeps'.format(max_iter),
                             last_iterate=beta.copy())


def _as_voxel_vector(values, n_voxels, name):
    values = np.broadcast_to(np.asarray(values, dtype=float), (n_voxels,))
    if np.any(~np.isfinite(values)) or np.any(values < 0):
        raise InvalidParameterError('{} must be finite and non-negative'.format(name))
    return values


def _solve_field(X, Y, l1, l2, tol, max_iter, enabled, warm=None):
    Xs, Ys, std = standardize(X, Y, enabled)
    gram = Xs.T @ Xs
    beta = np.zeros((X.shape[1], Y.shape[1])) if warm is None else warm
    sweeps = _coordinate_descent(gram, Xs.T @ Ys, l1, l2, beta, tol, max_iter)
    raw, intercept = unstandardize(beta, std)
    return raw, intercept, sweeps


def elastic_net_fit(design, response, l1, l2, tol=1e-8, max_iter=10000, standardize=False):
    """
    Minimize RSS + l1 ||b||_1 + l2 ||b||_2^2.

    Args:
        response: T-vector, or T x V matrix (penalties may then be V-vectors)
        standardize: center and unit-norm the columns and center the response
            first; coefficients are returned in raw units with an intercept.
    """
    if tol <= 0 or max_iter < 1:
        raise InvalidParameterError('Need tol > 0 and max_iter >= 1')
    Y = np.asarray(response, dtype=float)
    single = Y.ndim == 1
    Y = Y.reshape(len(Y), -1)
    l1 = _as_voxel_vector(l1, Y.shape[1], 'lambda1')
    l2 = _as_voxel_vector(l2, Y.shape[1], 'lambda2')

    raw, intercept, sweeps = _solve_field(design, Y, l1, l2, tol, max_iter, standardize)
    if single:
        return EnSolution(raw[:, 0], float(intercept[0]), sweeps)
    return EnSolution(raw.T, intercept, sweeps)


def fold_assignment(n_rows, folds, seed):
    """Seeded random partition of rows into `folds` groups of near-equal size."""
    if folds < 2 or n_rows < folds:
        raise InvalidFoldsError('Need 2 <= folds <= T, got {} folds for {} rows'.format(folds, n_rows))
    perm = np.random.default_rng(seed).permutation(n_rows)
    labels = np.empty(n_rows, dtype=np.int64)
    for k, chunk in enumerate(np.array_split(perm, folds)):
        if len(chunk) < 1:
            raise InvalidFoldsError('Fold {} has no rows'.format(k))
        labels[chunk] = k
    return labels


def default_grids(design, responses, standardize_features=True):
    """
    lambda1: 20 values per voxel from the null threshold 2 max|x_j'y| down four
    decades; lambda2: {0, 0.01, 0.1, 1, 10} times the mean diagonal of X'X.
    Returns (V x 20 array, 5-vector), both ascending.
    """
    Xs, Ys, _ = standardize(design, np.asarray(responses, dtype=float).reshape(len(design), -1),
                            standardize_features)
    null = 2.0 * np.max(np.abs(Xs.T @ Ys), axis=0)
    null = np.where(null > 0, null, 1.0)
    l1 = null[:, None] * np.logspace(-EN_L1_DECADES, 0, EN_L1_POINTS)[None, :]
    l2 = np.asarray(EN_L2_FACTORS) * float(np.mean(np.sum(Xs ** 2, axis=0)))
    return l1, l2


def _cv_surface(X, Y, l1_grid, l2_grid, labels, tol, max_iter, enabled):
    """Mean held-out MSE, shape (n1, n2, V). l1_grid is V x n1 ascending."""
    n1, n2 = l1_grid.shape[1], len(l2_grid)
    folds = labels.max() + 1
    error = np.zeros((n1, n2, Y.shape[1]))
    for k in range(folds):
        train, test = labels != k, labels == k
        Xs, Ys, std = standardize(X[train], Y[train], enabled)
        gram, xty = Xs.T @ Xs, Xs.T @ Ys
        for j, l2 in enumerate(l2_grid):
            beta = np.zeros((X.shape[1], Y.shape[1]))
            # warm start along decreasing lambda1
            for i in range(n1 - 1, -1, -1):
                _coordinate_descent(gram, xty, l1_grid[:, i], l2, beta, tol, max_iter)
                raw, intercept = unstandardize(beta, std)
                resid = Y[test] - X[test] @ raw - intercept
                error[i, j] += np.mean(resid ** 2, axis=0)
    return error / folds


def _select(error):
    """Per-voxel argmin over (i, j), ties going to larger lambda1 then larger lambda2."""
    n1, n2, n_voxels = error.shape
    flipped = error[::-1, ::-1].reshape(n1 * n2, n_voxels)
    flat = np.argmin(flipped, axis=0)
    return n1 - 1 - flat // n2, n2 - 1 - flat % n2


def elastic_net_cv_field(dataset, l1_grid=None, l2_grid=None, folds=DEFAULT_FOLDS, seed=0,
                         tol=1e-8, max_iter=10000, standardize_features=True):
    """
    Per-voxel elastic-net tuning by K-fold CV and a full-data refit.

    Args:
        l1_grid: ascending lambda1 values, shared (1-D) or per voxel (V x n1)
        l2_grid: ascending lambda2 values shared by all voxels

    Returns:
        (CoefficientField, RegularizationMap, list of EnPath)
    """
    X, Y = dataset.design, dataset.responses
    n_voxels = Y.shape[1]
    default_l1, default_l2 = default_grids(X, Y, standardize_features)
    l1_grid = default_l1 if l1_grid is None else np.asarray(l1_grid, dtype=float)
    l2_grid = default_l2 if l2_grid is None else np.asarray(l2_grid, dtype=float).ravel()
    if l1_grid.ndim == 1:
        l1_grid = np.broadcast_to(l1_grid, (n_voxels, len(l1_grid)))
    for name, grid in (('lambda1', l1_grid), ('lambda2', l2_grid)):
        if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid, axis=-1) < 0):
            raise InvalidParameterError('The {} grid must be non-empty, non-negative and ascending'.format(name))

    labels = fold_assignment(len(X), folds, seed)
    logger.info('Elastic net CV: %d x %d grid, %d folds, %d voxels',
                l1_grid.shape[1], len(l2_grid), folds, n_voxels)
    error = _cv_surface(X, Y, l1_grid, l2_grid, labels, tol, max_iter, standardize_features)
    best1, best2 = _select(error)
    voxels = np.arange(n_voxels)
    l1, l2 = l1_grid[voxels, best1], l2_grid[best2]

    solution = elastic_net_fit(X, Y, l1, l2, tol, max_iter, standardize_features)
    coefficients = solution.coefficients
    resid = Y - X @ coefficients.T - solution.intercept
    sigma2 = np.sum(resid ** 2, axis=0) / len(X)
    # no closed-form covariance for the lasso part: report the ridge sandwich at l2
    std_errors = _ridge_like_std_errors(X, l2, sigma2)
    field = CoefficientField(coefficients, std_errors, sigma2, 'elastic_net', intercepts=solution.intercept)
    reg_map = (RegularizationMap.empty(n_voxels, en_standardized=bool(standardize_features))
               .with_values(en_lambda1=l1, en_lambda2=l2))
    paths = [EnPath(l1_grid[v].copy(), l2_grid.copy(), error[:, :, v], (int(best1[v]), int(best2[v])))
             for v in voxels]
    return field, reg_map, paths


def _ridge_like_std_errors(X, l2, sigma2):
    Xc = X - X.mean(axis=0)
    s2, vecs = np.linalg.eigh(Xc.T @ Xc)
    s2 = np.clip(s2, 0.0, None)
    denom = s2[:, None] + l2[None, :]
    sandwich = (vecs ** 2) @ np.divide(s2[:, None], denom ** 2, out=np.zeros_like(denom), where=denom > 0)
    return np.sqrt(sandwich * sigma2[None, :]).T


def elastic_net_cv(design, response, l1_grid=None, l2_grid=None, folds=DEFAULT_FOLDS, seed=0,
                   tol=1e-8, max_iter=10000, standardize_features=True):
    """Single-voxel CV: returns (EnPath, EnSolution)."""
    y = np.asarray(response, dtype=float).reshape(-1, 1)
    dataset = Dataset(design, y, VoxelGeometry([[0, 0, 0]]), RoiPartition(['0']))
    field, _, paths = elastic_net_cv_field(dataset, l1_grid, l2_grid, folds, seed, tol, max_iter,
                                           standardize_features)
    return paths[0], EnSolution(field.coefficients[0], float(field.intercepts[0]), None)
