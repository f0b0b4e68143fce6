"""
Hierarchical Bayesian small-area model fitted by Gibbs sampling.

    y_vt ~ N(x_t'(u_A(v) + z_v), sigma2_v)
    z_v ~ N(0, nu2_v I),  u_a ~ N(0, alpha2_a I)
    sigma2_v ~ IG(a, b),  alpha2_a ~ IG(c, d),  nu2_v ~ IG(e, f)

Inverse gammas are (shape, scale). One sweep updates, in order, every z_v,
every u_a, every sigma2_v, every alpha2_a and every nu2_v. Each area is a
lane with its own random stream: the voxel-level draws of an area and the
area-level draws come from that lane's generator, so lanes can be processed
independently and results do not depend on how lanes are scheduled.

The Gaussian conditionals share the eigenbasis of X'X, so every precision
matrix is diagonal in that basis and draws cost O(P^2) per voxel.
"""
from collections import namedtuple
import logging

import numpy as np

from voxreg.closed_form import CoefficientField, RegularizationMap
from voxreg.constants import BURN_IN, SAMPLES, THIN
from voxreg.errors import InvalidParameterError, NumericalBlowupError
from voxreg.ids import AreaIds

logger = logging.getLogger(__name__)

Hyperparameters = namedtuple('Hyperparameters', ['a', 'b', 'c', 'd', 'e', 'f'])

# shape 3, scale 2: proper priors whose means are all 1
DEFAULT_HYPER = Hyperparameters(a=3.0, b=2.0, c=3.0, d=2.0, e=3.0, f=2.0)

GibbsState = namedtuple('GibbsState', ['u', 'z', 'sigma2', 'alpha2', 'nu2'])

PosteriorSummary = namedtuple('PosteriorSummary',
                              ['beta_mean', 'beta_sd', 'nu2_mean', 'sigma2_mean', 'sample_count', 'traces'])


def check_hyperparameters(hyper):
    values = np.asarray(hyper, dtype=float)
    if values.shape != (6,) or np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise InvalidParameterError('Hyperparameters a..f must be strictly positive, got {}'.format(hyper))
    return Hyperparameters(*values.tolist())


def sigma2_conditional(hyper, n_rows, rss):
    """IG(a', b') with a' = (2a + T)/2, b' = (2b + RSS)/2."""
    return (2.0 * hyper.a + n_rows) / 2.0, (2.0 * hyper.b + np.asarray(rss, dtype=float)) / 2.0


def alpha2_conditional(hyper, n_features, utu):
    """IG(c', d') with c' = (2c + P)/2, d' = (2d + u'u)/2."""
    return (2.0 * hyper.c + n_features) / 2.0, (2.0 * hyper.d + np.asarray(utu, dtype=float)) / 2.0


def nu2_conditional(hyper, n_features, ztz):
    """IG(e', f') with e' = (2e + P)/2, f' = (2f + z'z)/2."""
    return (2.0 * hyper.e + n_features) / 2.0, (2.0 * hyper.f + np.asarray(ztz, dtype=float)) / 2.0


def z_conditional(xtx, xty_v, u_area, sigma2_v, nu2_v):
    """Dense (mean, covariance) of z_v given everything else."""
    n_features = len(xtx)
    cov = np.linalg.inv(np.eye(n_features) / nu2_v + xtx / sigma2_v)
    return cov @ (xty_v - xtx @ u_area) / sigma2_v, cov


def u_conditional(xtx, xty_members, z_members, sigma2_members, alpha2_a):
    """Dense (mean, covariance) of u_a given everything else; members are rows."""
    weights = 1.0 / np.asarray(sigma2_members, dtype=float)
    n_features = len(xtx)
    cov = np.linalg.inv(np.eye(n_features) / alpha2_a + xtx * weights.sum())
    return cov @ (weights @ xty_members - xtx @ (weights @ z_members)), cov


def draw_inverse_gamma(rng, shape, scale, size=None):
    scale = np.asarray(scale, dtype=float)
    size = np.broadcast_shapes(np.shape(shape), scale.shape) if size is None else size
    return scale / rng.standard_gamma(shape, size=size)


def prior_mean(shape, scale):
    """Inverse-gamma mean, falling back to the scale when the mean is infinite."""
    return scale / (shape - 1.0) if shape > 1.0 else scale


class SaeProblem(namedtuple('SaeProblem', ['xtx', 'xty', 'yty', 'n_rows', 'eigvals', 'eigvecs', 'ids'])):
    """Sufficient statistics of one dataset, cached once per fit."""
    __slots__ = ()

    @classmethod
    def build(cls, design, responses, partition):
        X = np.asarray(design, dtype=float)
        xtx = X.T @ X
        eigvals, eigvecs = np.linalg.eigh(xtx)
        problem = cls(xtx, None, None, X.shape[0], np.clip(eigvals, 0.0, None), eigvecs, AreaIds(partition))
        return problem.with_responses(X, responses)

    @classmethod
    def from_dataset(cls, dataset, partition=None):
        return cls.build(dataset.design, dataset.responses, partition if partition is not None else dataset.rois)

    def with_responses(self, design, responses):
        Y = np.asarray(responses, dtype=float)
        return self._replace(xty=(np.asarray(design, dtype=float).T @ Y).T, yty=np.sum(Y ** 2, axis=0))

    @property
    def n_features(self):
        return self.xtx.shape[0]

    @property
    def n_voxels(self):
        return self.xty.shape[0]


def initial_state(problem, hyper):
    """Zero effects; variances at their prior means."""
    n_areas, n_voxels, n_features = len(problem.ids), problem.n_voxels, problem.n_features
    return GibbsState(u=np.zeros((n_areas, n_features)),
                      z=np.zeros((n_voxels, n_features)),
                      sigma2=np.full(n_voxels, prior_mean(hyper.a, hyper.b)),
                      alpha2=np.full(n_areas, prior_mean(hyper.c, hyper.d)),
                      nu2=np.full(n_voxels, prior_mean(hyper.e, hyper.f)))


def lane_generators(seed, n_lanes):
    """One independent generator per lane, derived from the master seed and lane index."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(n_lanes)]


def _check_finite(block, values, members):
    bad = ~np.all(np.isfinite(np.reshape(values, (len(members), -1))), axis=1)
    if np.any(bad):
        index = int(members[np.flatnonzero(bad)[0]])
        raise NumericalBlowupError('Non-finite {} conditional at index {}'.format(block, index),
                                   block=block, index=index)


def _check_variance(block, values, members):
    bad = ~(np.isfinite(values) & (values > 0))
    if np.any(bad):
        index = int(members[np.flatnonzero(bad)[0]])
        raise NumericalBlowupError('{} draw left (0, inf) at index {}'.format(block, index),
                                   block=block, index=index)


def _draw_gaussian_in_eigenbasis(rng, problem, rhs, precision):
    """Draw from N(Q diag(1/precision) Q' rhs, Q diag(1/precision) Q') row-wise."""
    q = problem.eigvecs
    mean = (rhs @ q) / precision
    noise = rng.standard_normal(precision.shape) / np.sqrt(precision)
    return (mean + noise) @ q.T


def _lanes(rngs, n_lanes):
    if isinstance(rngs, np.random.Generator):
        return [rngs] * n_lanes
    if len(rngs) != n_lanes:
        raise InvalidParameterError('Need one generator per area: {} for {} areas'.format(len(rngs), n_lanes))
    return list(rngs)


def gibbs_sweep(state, dataset, hyper, rngs, problem=None):
    """
    One systematic sweep z -> u -> sigma2 -> alpha2 -> nu2.

    Args:
        state: current GibbsState (not modified)
        dataset: Dataset with an ROI partition; ignored when `problem` is given
        rngs: a Generator, or one Generator per area
        problem: cached SaeProblem for `dataset`
    Returns:
        the new GibbsState
    """
    problem = problem if problem is not None else SaeProblem.from_dataset(dataset)
    ids = problem.ids
    lanes = _lanes(rngs, len(ids))
    lam = problem.eigvals
    u, z = state.u.copy(), state.z.copy()
    sigma2, alpha2, nu2 = state.sigma2.copy(), state.alpha2.copy(), state.nu2.copy()
    n_features = problem.n_features

    for a, rng in enumerate(lanes):
        m = ids.members(a)
        precision = 1.0 / nu2[m][:, None] + lam[None, :] / sigma2[m][:, None]
        rhs = (problem.xty[m] - u[a] @ problem.xtx) / sigma2[m][:, None]
        _check_finite('z', rhs / precision, m)
        z[m] = _draw_gaussian_in_eigenbasis(rng, problem, rhs, precision)

    for a, rng in enumerate(lanes):
        m = ids.members(a)
        weights = 1.0 / sigma2[m]
        precision = (1.0 / alpha2[a] + weights.sum() * lam)[None, :]
        rhs = (weights @ problem.xty[m] - (weights @ z[m]) @ problem.xtx)[None, :]
        _check_finite('u', rhs / precision, np.array([a]))
        u[a] = _draw_gaussian_in_eigenbasis(rng, problem, rhs, precision)[0]

    beta = u[ids.voxel_area] + z
    rss = problem.yty - 2.0 * np.sum(beta * problem.xty, axis=1) + np.sum((beta @ problem.xtx) * beta, axis=1)
    rss = np.clip(rss, 0.0, None)
    for a, rng in enumerate(lanes):
        m = ids.members(a)
        shape, scale = sigma2_conditional(hyper, problem.n_rows, rss[m])
        _check_finite('sigma2', scale, m)
        sigma2[m] = draw_inverse_gamma(rng, shape, scale)
        _check_variance('sigma2', sigma2[m], m)

    for a, rng in enumerate(lanes):
        shape, scale = alpha2_conditional(hyper, n_features, u[a] @ u[a])
        _check_finite('alpha2', scale, np.array([a]))
        alpha2[a] = draw_inverse_gamma(rng, shape, scale)
        _check_variance('alpha2', alpha2[a:a + 1], np.array([a]))

    for a, rng in enumerate(lanes):
        m = ids.members(a)
        shape, scale = nu2_conditional(hyper, n_features, np.sum(z[m] ** 2, axis=1))
        _check_finite('nu2', scale, m)
        nu2[m] = draw_inverse_gamma(rng, shape, scale)
        _check_variance('nu2', nu2[m], m)

    return GibbsState(u=u, z=z, sigma2=sigma2, alpha2=alpha2, nu2=nu2)


def conditional_beta_mean(state, problem):
    """u_A(v) + E[z_v | u, sigma2, nu2, y] for every voxel."""
    u = state.u[problem.ids.voxel_area]
    precision = 1.0 / state.nu2[:, None] + problem.eigvals[None, :] / state.sigma2[:, None]
    rhs = (problem.xty - u @ problem.xtx) / state.sigma2[:, None]
    q = problem.eigvecs
    return u + ((rhs @ q) / precision) @ q.T


def monitored_voxels(n_voxels, count=5):
    return np.unique(np.linspace(0, n_voxels - 1, min(count, n_voxels)).astype(np.int64))


class _RunningMoments:
    """Welford accumulator."""

    def __init__(self, shape):
        self.count = 0
        self.mean = np.zeros(shape)
        self._m2 = np.zeros(shape)

    def add(self, value):
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (value - self.mean)

    def sd(self):
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self._m2 / (self.count - 1))


def sae_fit(dataset, hyper=DEFAULT_HYPER, burn_in=BURN_IN, thin=THIN, samples=SAMPLES, seed=0,
            partition=None, monitor=5):
    """
    Run burn_in + thin * samples sweeps from the deterministic initial state
    and summarize the retained draws.

    Args:
        partition: areas to pool over (defaults to dataset.rois)
        monitor: number of voxels whose scalar traces are kept for diagnostics
    Returns:
        (PosteriorSummary, CoefficientField, RegularizationMap)
    """
    hyper = check_hyperparameters(hyper)
    if samples < 1 or thin < 1 or burn_in < 0:
        raise InvalidParameterError('Need samples >= 1, thin >= 1 and burn_in >= 0')
    problem = SaeProblem.from_dataset(dataset, partition)
    state = initial_state(problem, hyper)
    rngs = lane_generators(seed, len(problem.ids))
    watched = monitored_voxels(problem.n_voxels, monitor)

    beta_moments = _RunningMoments(state.z.shape)
    mean_moments = _RunningMoments(state.z.shape)
    nu2_moments = _RunningMoments(state.nu2.shape)
    sigma2_moments = _RunningMoments(state.sigma2.shape)
    traces = {}
    for v in watched:
        for name in ('beta[{},0]', 'sigma2[{}]', 'nu2[{}]'):
            traces[name.format(v)] = []

    total = burn_in + thin * samples
    logger.info('SAE Gibbs: %d voxels, %d areas, %d sweeps', problem.n_voxels, len(problem.ids), total)
    for sweep in range(1, total + 1):
        try:
            state = gibbs_sweep(state, None, hyper, rngs, problem)
        except NumericalBlowupError as e:
            e.sweep = sweep
            raise
        if sweep <= burn_in or (sweep - burn_in) % thin:
            continue
        beta = state.u[problem.ids.voxel_area] + state.z
        beta_moments.add(beta)
        mean_moments.add(conditional_beta_mean(state, problem))
        nu2_moments.add(state.nu2)
        sigma2_moments.add(state.sigma2)
        for v in watched:
            traces['beta[{},0]'.format(v)].append(beta[v, 0])
            traces['sigma2[{}]'.format(v)].append(state.sigma2[v])
            traces['nu2[{}]'.format(v)].append(state.nu2[v])

    # Rao-Blackwellized mean; the sd still comes from the draws
    summary = PosteriorSummary(beta_mean=mean_moments.mean, beta_sd=beta_moments.sd(),
                               nu2_mean=nu2_moments.mean, sigma2_mean=sigma2_moments.mean,
                               sample_count=beta_moments.count,
                               traces={name: np.asarray(vals) for name, vals in traces.items()})
    if summary.traces:
        logger.info('SAE Gibbs kept %d draws, max lag-1 autocorrelation %.3f', summary.sample_count,
                    max_lag1_autocorrelation(summary.traces))
    field = CoefficientField(summary.beta_mean, summary.beta_sd, summary.sigma2_mean, 'sae')
    reg_map = RegularizationMap.empty(problem.n_voxels).with_values(posterior_nu2=summary.nu2_mean)
    return summary, field, reg_map


def lag1_autocorrelation(trace):
    x = np.asarray(trace, dtype=float)
    x = x - x.mean()
    denom = x @ x
    if len(x) < 2 or denom == 0:
        return 0.0
    return float(x[:-1] @ x[1:] / denom)


def max_lag1_autocorrelation(traces):
    """Largest lag-1 autocorrelation over all monitored scalar traces."""
    return max((lag1_autocorrelation(t) for t in traces.values()), default=0.0)
