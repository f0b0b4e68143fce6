"""
Validation harness for the small-area Gibbs sampler.

Two checks are run on a small instance:
  - the joint-distribution test: statistics of parameters drawn forward from
    the prior are compared with statistics from a chain that alternates
    "draw data given parameters" and "one Gibbs sweep given data". Both
    sample the same joint distribution when every conditional is right.
  - inverse-gamma moment checks: the empirical mean of each variance
    conditional matches scale / (shape - 1).
"""
from collections import namedtuple
import logging

import numpy as np

from voxreg.errors import InvalidParameterError
from voxreg.sae import (SaeProblem, GibbsState, alpha2_conditional, check_hyperparameters, draw_inverse_gamma,
                        gibbs_sweep, lane_generators, nu2_conditional, sigma2_conditional)

logger = logging.getLogger(__name__)

StatisticCheck = namedtuple('StatisticCheck', ['name', 'expected', 'observed', 'z', 'passed'])

CheckReport = namedtuple('CheckReport', ['joint', 'moments', 'draws', 'passed'])

Z_LIMIT = 3.0

STATISTICS = ('u[0,0]', 'z[0,0]', 'log sigma2[0]', 'log alpha2[0]', 'log nu2[0]', 'u[0,0]^2', 'z[0,0]^2')


def _statistics(state):
    u, z = state.u[0, 0], state.z[0, 0]
    return np.array([u, z, np.log(state.sigma2[0]), np.log(state.alpha2[0]), np.log(state.nu2[0]),
                     u * u, z * z])


def prior_draw(rng, hyper, n_areas, n_voxels, n_features):
    alpha2 = draw_inverse_gamma(rng, hyper.c, np.full(n_areas, hyper.d))
    nu2 = draw_inverse_gamma(rng, hyper.e, np.full(n_voxels, hyper.f))
    sigma2 = draw_inverse_gamma(rng, hyper.a, np.full(n_voxels, hyper.b))
    u = rng.standard_normal((n_areas, n_features)) * np.sqrt(alpha2)[:, None]
    z = rng.standard_normal((n_voxels, n_features)) * np.sqrt(nu2)[:, None]
    return GibbsState(u=u, z=z, sigma2=sigma2, alpha2=alpha2, nu2=nu2)


def data_draw(rng, design, state, voxel_area):
    beta = state.u[voxel_area] + state.z
    noise = rng.standard_normal((design.shape[0], len(beta))) * np.sqrt(state.sigma2)[None, :]
    return design @ beta.T + noise


def _batch_se(values, batches):
    usable = len(values) - len(values) % batches
    means = values[:usable].reshape(batches, -1, values.shape[1]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(batches)


def _z_score(a_mean, a_se, b_mean, b_se):
    se = np.sqrt(a_se ** 2 + b_se ** 2)
    return np.divide(a_mean - b_mean, se, out=np.zeros_like(se), where=se > 0)


def _moment_check(rng, name, shape, scale, draws):
    values = draw_inverse_gamma(rng, shape, scale, size=draws)
    expected = scale / (shape - 1.0)
    if shape <= 2.0:
        # infinite variance: the standard error is meaningless
        return StatisticCheck(name, float(expected), float(values.mean()), None, None)
    z = (values.mean() - expected) / (values.std(ddof=1) / np.sqrt(draws))
    return StatisticCheck(name, float(expected), float(values.mean()), float(z), bool(abs(z) < Z_LIMIT))


def conditional_checks(hyper, design, partition, draws=20000, seed=0, batches=50):
    """
    Args:
        design: T x P design of the small instance (T <= 30)
        partition: RoiPartition with V <= 10 voxels and at most 2 areas
    Returns:
        CheckReport with one StatisticCheck per monitored statistic
    """
    hyper = check_hyperparameters(hyper)
    design = np.array(design, dtype=float, ndmin=2)
    n_rows, n_features = design.shape
    n_voxels, n_areas = partition.n_voxels, partition.n_areas
    if n_voxels > 10 or n_areas > 2 or n_rows > 30:
        raise InvalidParameterError('Checks run on small instances: V <= 10, A <= 2, T <= 30')
    if draws < 2 * batches:
        raise InvalidParameterError('Need at least {} draws'.format(2 * batches))

    forward_rng, data_rng, check_rng, *sweep_rngs = lane_generators(seed, 3 + n_areas)
    problem = SaeProblem.build(design, np.zeros((n_rows, n_voxels)), partition)
    area_of = problem.ids.voxel_area

    forward = np.array([_statistics(prior_draw(forward_rng, hyper, n_areas, n_voxels, n_features))
                        for _ in range(draws)])

    state = prior_draw(data_rng, hyper, n_areas, n_voxels, n_features)
    chain = np.empty_like(forward)
    for i in range(draws):
        responses = data_draw(data_rng, design, state, area_of)
        problem = problem.with_responses(design, responses)
        state = gibbs_sweep(state, None, hyper, sweep_rngs, problem)
        chain[i] = _statistics(state)

    f_mean, f_se = forward.mean(axis=0), forward.std(axis=0, ddof=1) / np.sqrt(draws)
    c_mean, c_se = chain.mean(axis=0), _batch_se(chain, batches)
    zs = _z_score(c_mean, c_se, f_mean, f_se)
    joint = [StatisticCheck(name, float(fm), float(cm), float(z), bool(abs(z) < Z_LIMIT))
             for name, fm, cm, z in zip(STATISTICS, f_mean, c_mean, zs)]

    beta = state.u[area_of] + state.z
    resid = responses[:, 0] - design @ beta[0]
    moments = [
        _moment_check(check_rng, 'sigma2[0]', *sigma2_conditional(hyper, n_rows, resid @ resid), draws),
        _moment_check(check_rng, 'alpha2[0]', *alpha2_conditional(hyper, n_features, state.u[0] @ state.u[0]),
                      draws),
        _moment_check(check_rng, 'nu2[0]', *nu2_conditional(hyper, n_features, state.z[0] @ state.z[0]), draws),
    ]
    passed = all(c.passed is not False for c in joint + moments)
    for check in joint + moments:
        logger.info('%-14s expected %.4g observed %.4g z=%s', check.name, check.expected, check.observed,
                    'n/a' if check.z is None else '{:.2f}'.format(check.z))
    return CheckReport(joint=joint, moments=moments, draws=draws, passed=passed)
