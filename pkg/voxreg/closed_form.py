"""
OLS and ridge fits with per-voxel GCV tuning.

All fits act on the raw design (no centering, no intercept) and are
vectorized over voxels: responses are T x V and coefficients come back V x P.
Ridge solutions for every lambda come from one thin SVD of X, so the
factorization is shared across voxels and lambdas.
"""
from collections import namedtuple
import logging

import numpy as np
from scipy import linalg

from voxreg.constants import RIDGE_GRID_DECADES, RIDGE_GRID_POINTS
from voxreg.errors import DegenerateGcvError, InvalidParameterError, SingularDesignError

logger = logging.getLogger(__name__)

_INTERPOLATION_TOL = 1e-12


class CoefficientField(namedtuple('CoefficientField', ['coefficients', 'std_errors', 'noise_variance',
                                                       'method', 'intercepts', 'approximate'])):
    """
    Per-voxel estimates. coefficients and std_errors are V x P, noise_variance
    and intercepts length V. `approximate` marks std errors that were
    propagated through smoothing rather than derived from a covariance.
    """
    __slots__ = ()

    def __new__(cls, coefficients, std_errors, noise_variance, method, intercepts=None, approximate=False):
        coefficients = np.array(coefficients, dtype=float, ndmin=2)
        std_errors = np.array(std_errors, dtype=float, ndmin=2)
        noise_variance = np.asarray(noise_variance, dtype=float)
        intercepts = (np.zeros(len(coefficients)) if intercepts is None
                      else np.asarray(intercepts, dtype=float))
        if np.any(std_errors < 0) or np.any(noise_variance < 0):
            raise InvalidParameterError('Standard errors and noise variances must be non-negative')
        return super().__new__(cls, coefficients, std_errors, noise_variance, method, intercepts, approximate)

    @property
    def n_voxels(self):
        return self.coefficients.shape[0]


_REG_FIELDS = ('ridge_lambda', 'en_lambda1', 'en_lambda2', 'smoothing_radius', 'posterior_nu2')


class RegularizationMap(namedtuple('RegularizationMap', _REG_FIELDS + ('metadata',))):
    """
    Per-voxel regularization intensities. Absent intensities are NaN;
    `metadata` holds free-form notes (e.g. whether features were standardized).
    """
    __slots__ = ()

    @classmethod
    def empty(cls, n_voxels, **metadata):
        return cls(*[np.full(n_voxels, np.nan) for _ in _REG_FIELDS], metadata=dict(metadata))

    @property
    def n_voxels(self):
        return len(self.ridge_lambda)

    def with_values(self, **values):
        """Replace intensity columns, checking they are non-negative."""
        for name, vals in values.items():
            vals = np.asarray(vals, dtype=float)
            if np.any(vals[~np.isnan(vals)] < 0):
                raise InvalidParameterError('{} must be non-negative'.format(name))
            values[name] = np.broadcast_to(vals, (self.n_voxels,)).copy()
        return self._replace(**values)

    def with_metadata(self, **metadata):
        return self._replace(metadata={**self.metadata, **metadata})

    def present(self):
        """(name, values) for every column that has at least one value."""
        return [(name, getattr(self, name)) for name in _REG_FIELDS
                if not np.all(np.isnan(getattr(self, name)))]


def predict(field, design):
    """Forward model: T x V predicted activity."""
    return np.asarray(design, dtype=float) @ field.coefficients.T + field.intercepts


def _svd(design):
    u, s, vt = linalg.svd(design, full_matrices=False)
    cutoff = s.max(initial=0.0) * max(design.shape) * np.finfo(float).eps
    s = np.where(s > cutoff, s, 0.0)
    return u, s, vt


def ols_fit(dataset):
    """Least squares per voxel with sigma^2 = RSS / (T - P)."""
    X, Y = dataset.design, dataset.responses
    n_rows, n_features = X.shape
    if n_rows < n_features or np.linalg.matrix_rank(X) < n_features:
        raise SingularDesignError('Design of shape {} is rank deficient; use a regularized fit'.format(X.shape))
    try:
        factor = linalg.cho_factor(X.T @ X)
    except linalg.LinAlgError as e:
        raise SingularDesignError('Cholesky factorization of the Gram matrix failed') from e

    beta = linalg.cho_solve(factor, X.T @ Y)
    rss = np.sum((Y - X @ beta) ** 2, axis=0)
    dof = n_rows - n_features
    if dof == 0:
        logger.warning('T == P: the OLS fit interpolates, noise variance set to 0')
        sigma2 = np.zeros_like(rss)
    else:
        sigma2 = rss / dof
    inv_diag = np.diag(linalg.cho_solve(factor, np.eye(n_features)))
    std_errors = np.sqrt(np.outer(sigma2, np.clip(inv_diag, 0.0, None)))
    return CoefficientField(beta.T, std_errors, sigma2, 'ols')


def _check_lambdas(lambdas, n_voxels):
    lambdas = np.broadcast_to(np.asarray(lambdas, dtype=float), (n_voxels,))
    if np.any(~np.isfinite(lambdas)) or np.any(lambdas < 0):
        raise InvalidParameterError('Ridge penalties must be finite and non-negative')
    return lambdas


def ridge_fit(dataset, lambdas):
    """
    Ridge per voxel: beta_v = (X'X + lambda_v I)^-1 X'y_v, with the sandwich
    covariance sigma_v^2 (X'X+lambda I)^-1 X'X (X'X+lambda I)^-1 and
    sigma_v^2 = RSS_v / T.
    """
    X, Y = dataset.design, dataset.responses
    n_rows, n_features = X.shape
    lambdas = _check_lambdas(lambdas, Y.shape[1])
    u, s, vt = _svd(X)
    rank = np.count_nonzero(s)
    if rank < n_features and np.any(lambdas == 0):
        raise SingularDesignError('Zero penalty on a rank-deficient design ({} < {})'.format(rank, n_features))

    s2 = (s ** 2)[:, None]
    denom = s2 + lambdas[None, :]
    safe = np.where(denom > 0, denom, 1.0)
    shrink = np.where(denom > 0, s[:, None] / safe, 0.0)
    beta = vt.T @ (shrink * (u.T @ Y))

    rss = np.sum((Y - X @ beta) ** 2, axis=0)
    sigma2 = rss / n_rows
    sandwich = (vt.T ** 2) @ np.where(denom > 0, s2 / safe ** 2, 0.0)
    std_errors = np.sqrt(sigma2[None, :] * sandwich).T
    return CoefficientField(beta.T, std_errors, sigma2, 'ridge')


def default_ridge_grid(design):
    """30 log-spaced values over [1e-3 s, 1e3 s], s = mean diagonal of X'X."""
    scale = float(np.mean(np.sum(np.asarray(design, dtype=float) ** 2, axis=0)))
    scale = scale if scale > 0 else 1.0
    return np.logspace(np.log10(scale) - RIDGE_GRID_DECADES, np.log10(scale) + RIDGE_GRID_DECADES,
                       RIDGE_GRID_POINTS)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise InvalidParameterError('The lambda grid is empty')
    if np.any(~np.isfinite(grid)) or np.any(grid < 0):
        raise InvalidParameterError('Grid values must be finite and non-negative')
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameterError('The lambda grid must be strictly ascending')
    return grid


def gcv_curve(design, responses, grid):
    """
    GCV(lambda) = (RSS/T) / (1 - tr(H)/T)^2 for every grid point and voxel.
    Points where tr(H) = T are NaN. Returns an array of shape (len(grid), V).
    """
    X = np.asarray(design, dtype=float)
    Y = np.array(responses, dtype=float, ndmin=2)
    if Y.shape[0] != X.shape[0]:
        Y = Y.T
    grid = _check_grid(grid)
    n_rows = X.shape[0]

    u, s, _ = _svd(X)
    uty = u.T @ Y
    outside = np.sum((Y - u @ uty) ** 2, axis=0)
    s2 = s ** 2

    curve = np.full((len(grid), Y.shape[1]), np.nan)
    for i, lam in enumerate(grid):
        denom = s2 + lam
        f = np.divide(s2, denom, out=np.zeros_like(s2), where=denom > 0)
        rss = outside + np.sum(((1.0 - f)[:, None] * uty) ** 2, axis=0)
        slack = 1.0 - np.sum(f) / n_rows
        if slack <= _INTERPOLATION_TOL:
            logger.debug('GCV skips lambda=%g: tr(H) = T', lam)
            continue
        curve[i] = (rss / n_rows) / slack ** 2
    return curve


def _pick_largest_minimum(curve):
    """Index of the minimum along axis 0, ties going to the largest index."""
    reversed_curve = curve[::-1]
    return curve.shape[0] - 1 - np.nanargmin(reversed_curve, axis=0)


def gcv_select(design, response, grid):
    """
    Returns:
        (selected lambda, GCV curve over the grid)
    """
    grid = _check_grid(grid)
    curve = gcv_curve(design, np.asarray(response, dtype=float).reshape(-1, 1), grid)[:, 0]
    if np.all(np.isnan(curve)):
        raise DegenerateGcvError('Every grid point interpolates the response')
    return float(grid[_pick_largest_minimum(curve)]), curve


def ridge_fit_cv(dataset, grid=None):
    """Ridge with lambda_v picked per voxel by GCV."""
    grid = _check_grid(default_ridge_grid(dataset.design) if grid is None else grid)
    curve = gcv_curve(dataset.design, dataset.responses, grid)
    degenerate = np.flatnonzero(np.all(np.isnan(curve), axis=0))
    if degenerate.size:
        raise DegenerateGcvError('Every grid point interpolates voxel {}'.format(degenerate[0]),
                                 voxel=int(degenerate[0]))
    lambdas = grid[_pick_largest_minimum(curve)]
    logger.info('GCV selected ridge penalties for %d voxels (median %g)', len(lambdas), np.median(lambdas))
    field = ridge_fit(dataset, lambdas)
    reg_map = RegularizationMap.empty(dataset.n_voxels).with_values(ridge_lambda=lambdas)
    return field, reg_map
