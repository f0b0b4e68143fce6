"""
Surrogate data drawn from the small-area model and the simulation studies
built on it: prior shape, correct vs shuffled areas, shrinkage of noise
voxels and standard-error comparison.
"""
from collections import namedtuple
import logging

import numpy as np
import pandas as pd
from scipy import stats

from voxreg.closed_form import ols_fit, predict, ridge_fit_cv
from voxreg.constants import (SEED_FIT, SEED_HOLDOUT, SEED_REPLICATE, SEED_SHUFFLE, SIM_AREAS,
                              SIM_FEATURES, SIM_REPLICATES, SIM_ROWS, SIM_VOXELS, TOY_ROWS, TOY_VOXELS)
from voxreg.dataset import Dataset, RoiPartition, contiguous_partition, layout_geometry
from voxreg.errors import InvalidParameterError
from voxreg.ids import AreaIds
from voxreg.methods import fit_method, method_spec
from voxreg.sae import DEFAULT_HYPER, Hyperparameters, check_hyperparameters, draw_inverse_gamma, sae_fit
from voxreg.scoring import normalized_rss
from voxreg.util import derived_rng, derived_seed

logger = logging.getLogger(__name__)

MIN_SIGN_TEST_REPLICATES = 10
HOLDOUT_FRACTION = 0.2

# Voxels sit close to their area effect (nu2 ~ 0.01) while areas sit far
# apart (alpha2 ~ 4) and the noise variance is ~ 1. With a 200 x 8 design the
# OLS variance per coefficient is ~ 1/160, so pooling within areas matters.
SIM_HYPER = Hyperparameters(a=3.0, b=2.0, c=3.0, d=8.0, e=3.0, f=0.02)

# Area effects near zero (alpha2 ~ 0.01) and voxel effects ~ 1: noise voxels
# (beta = 0) then sit near their area effect and every method can shrink them.
SHRINKAGE_HYPER = Hyperparameters(a=3.0, b=2.0, c=3.0, d=0.02, e=3.0, f=2.0)

EXPERIMENT_HYPER = {'data': SIM_HYPER, 'misassignment': SIM_HYPER, 'standard-errors': SIM_HYPER,
                    'shrinkage': SHRINKAGE_HYPER}


class SyntheticTruth(namedtuple('SyntheticTruth', ['true_u', 'true_z', 'true_sigma2', 'true_alpha2', 'true_nu2',
                                                   'hyper', 'partition', 'seed', 'noise_voxels'])):
    __slots__ = ()

    @property
    def beta(self):
        return self.true_u[AreaIds(self.partition).voxel_area] + self.true_z


def default_design(seed=0, n_rows=SIM_ROWS, n_features=SIM_FEATURES):
    """Seeded standard-normal design used when no design is supplied."""
    return np.random.default_rng(seed).standard_normal((n_rows, n_features))


def simulate_sae(design, n_voxels, partition, hyper=DEFAULT_HYPER, seed=0, noise_fraction=0.0):
    """
    Draw every parameter from its prior and responses given the design.

    A seeded `noise_fraction` of voxels gets z_v = -u_A(v), so their true
    coefficients are exactly zero and their responses are pure noise.

    Returns:
        (Dataset, SyntheticTruth)
    """
    hyper = check_hyperparameters(hyper)
    X = np.array(design, dtype=float, ndmin=2)
    if partition.n_voxels != n_voxels:
        raise InvalidParameterError('Partition covers {} voxels, expected {}'.format(partition.n_voxels, n_voxels))
    if not 0.0 <= noise_fraction <= 1.0:
        raise InvalidParameterError('noise_fraction must lie in [0, 1], got {}'.format(noise_fraction))
    n_rows, n_features = X.shape
    n_areas = partition.n_areas
    rng = np.random.default_rng(seed)

    alpha2 = draw_inverse_gamma(rng, hyper.c, hyper.d, size=n_areas)
    nu2 = draw_inverse_gamma(rng, hyper.e, hyper.f, size=n_voxels)
    sigma2 = draw_inverse_gamma(rng, hyper.a, hyper.b, size=n_voxels)
    u = rng.standard_normal((n_areas, n_features)) * np.sqrt(alpha2)[:, None]
    z = rng.standard_normal((n_voxels, n_features)) * np.sqrt(nu2)[:, None]
    area = AreaIds(partition).voxel_area
    noise_voxels = np.sort(rng.choice(n_voxels, size=int(round(noise_fraction * n_voxels)), replace=False))
    z[noise_voxels] = -u[area[noise_voxels]]

    beta = u[area] + z
    responses = X @ beta.T + rng.standard_normal((n_rows, n_voxels)) * np.sqrt(sigma2)
    dataset = Dataset(X, responses, layout_geometry(n_voxels), partition)
    truth = SyntheticTruth(u, z, sigma2, alpha2, nu2, hyper, partition, seed, noise_voxels)
    return dataset, truth


def shuffle_partition(partition, seed):
    """Seeded random reassignment of voxels to areas, keeping every area's size."""
    return RoiPartition(np.random.default_rng(seed).permutation(partition.assignment))


def spread_hyper(hyper, area_spread):
    """Scale the alpha2 prior scale so areas differ more (or less) from each other."""
    if area_spread <= 0:
        raise InvalidParameterError('area_spread must be positive, got {}'.format(area_spread))
    return hyper._replace(d=hyper.d * area_spread)


def holdout_split(n_rows, seed, fraction=HOLDOUT_FRACTION):
    perm = derived_rng(seed, SEED_HOLDOUT).permutation(n_rows)
    n_test = max(1, int(round(fraction * n_rows)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _heldout_nrss(field, train, test, voxels=None):
    nrss = normalized_rss(predict(field, test.design), test.responses, train.responses.mean(axis=0))
    nrss = nrss if voxels is None else nrss[voxels]
    return float(np.nanmean(nrss))


def sign_test(wins, losses, alternative='greater'):
    """Exact binomial sign test over non-tied replicates; None without any."""
    if wins + losses == 0:
        return None
    return float(stats.binomtest(wins, wins + losses, 0.5, alternative=alternative).pvalue)


MisassignmentReport = namedtuple('MisassignmentReport', ['replicates', 'true_wins', 'shuffled_wins',
                                                         'true_p_value', 'shuffled_p_value'])


def misassignment_replicate(index, design, hyper, seed, n_voxels, n_areas, sae_params):
    """One replicate: mean held-out nrss of ridge, SAE with true areas and SAE with shuffled areas."""
    rep_seed = derived_seed(seed, SEED_REPLICATE, index)
    partition = contiguous_partition(n_voxels, n_areas)
    dataset, _ = simulate_sae(design, n_voxels, partition, hyper, rep_seed)
    train_rows, test_rows = holdout_split(dataset.n_rows, rep_seed)
    train, test = dataset.take_rows(train_rows), dataset.take_rows(test_rows)
    fit_seed = derived_seed(rep_seed, SEED_FIT)

    ridge, _ = ridge_fit_cv(train)
    _, sae_true, _ = sae_fit(train, hyper, seed=fit_seed, partition=partition, **sae_params)
    shuffled = shuffle_partition(partition, derived_seed(seed, SEED_SHUFFLE, index))
    _, sae_shuffled, _ = sae_fit(train, hyper, seed=fit_seed, partition=shuffled, **sae_params)
    row = {'replicate': index, 'ridge_nrss': _heldout_nrss(ridge, train, test),
           'sae_true_nrss': _heldout_nrss(sae_true, train, test),
           'sae_shuffled_nrss': _heldout_nrss(sae_shuffled, train, test)}
    logger.info('Replicate %d: ridge %.4f, SAE %.4f, shuffled SAE %.4f', index, row['ridge_nrss'],
                row['sae_true_nrss'], row['sae_shuffled_nrss'])
    return row


def summarize_misassignment(rows):
    """Paired comparison of per-replicate rows against ridge."""
    frame = pd.DataFrame(sorted(rows, key=lambda r: r['replicate']),
                         columns=['replicate', 'ridge_nrss', 'sae_true_nrss', 'sae_shuffled_nrss'])
    frame['true_minus_ridge'] = frame['sae_true_nrss'] - frame['ridge_nrss']
    frame['shuffled_minus_ridge'] = frame['sae_shuffled_nrss'] - frame['ridge_nrss']
    true_wins = int(np.sum(frame['true_minus_ridge'] < 0))
    true_losses = int(np.sum(frame['true_minus_ridge'] > 0))
    shuffled_wins = int(np.sum(frame['shuffled_minus_ridge'] < 0))
    shuffled_losses = int(np.sum(frame['shuffled_minus_ridge'] > 0))
    enough = len(frame) >= MIN_SIGN_TEST_REPLICATES
    return MisassignmentReport(
        replicates=frame, true_wins=true_wins, shuffled_wins=shuffled_wins,
        true_p_value=sign_test(true_wins, true_losses, 'greater') if enough else None,
        shuffled_p_value=sign_test(shuffled_wins, shuffled_losses, 'two-sided') if enough else None)


def misassignment_experiment(design=None, hyper=SIM_HYPER, replicates=SIM_REPLICATES, seed=0,
                             n_voxels=SIM_VOXELS, n_areas=SIM_AREAS, area_spread=1.0, sae_params=None,
                             map_fn=map):
    """
    Ridge vs SAE with correctly assigned areas vs SAE with shuffled areas,
    scored by mean held-out normalized RSS. Sign-test p-values need at
    least 10 replicates and are None otherwise.
    """
    if replicates < 1:
        raise InvalidParameterError('Need at least one replicate')
    design = default_design(seed) if design is None else design
    hyper = spread_hyper(check_hyperparameters(hyper), area_spread)
    run = Replicate(misassignment_replicate, design, hyper, seed, n_voxels, n_areas, dict(sae_params or {}))
    return summarize_misassignment(list(map_fn(run, range(replicates))))


class Replicate:
    """Picklable partial binding everything but the replicate index."""

    def __init__(self, func, *args):
        self.func = func
        self.args = args

    def __call__(self, index):
        return self.func(index, *self.args)


ShrinkageReport = namedtuple('ShrinkageReport', ['replicates', 'wins', 'p_values'])

SHRINKAGE_METHODS = ('ridge', 'elastic_net', 'sae')


def shrinkage_replicate(index, design, hyper, seed, n_voxels, n_areas, noise_fraction, methods, method_params):
    """Mean held-out nrss on the pure-noise voxels for OLS and every shrinkage method."""
    rep_seed = derived_seed(seed, SEED_REPLICATE, index)
    partition = contiguous_partition(n_voxels, n_areas)
    dataset, truth = simulate_sae(design, n_voxels, partition, hyper, rep_seed, noise_fraction)
    train_rows, test_rows = holdout_split(dataset.n_rows, rep_seed)
    train, test = dataset.take_rows(train_rows), dataset.take_rows(test_rows)
    noise = truth.noise_voxels
    row = {'replicate': index, 'ols_nrss': _heldout_nrss(ols_fit(train), train, test, noise)}
    for name in methods:
        params = dict(method_params.get(name, {}))
        if name == 'sae':
            params.setdefault('hyper', hyper)
        field, _ = fit_method(train, method_spec(name, **params), rep_seed)
        row[name + '_nrss'] = _heldout_nrss(field, train, test, noise)
    return row


def shrinkage_experiment(design=None, hyper=SHRINKAGE_HYPER, replicates=SIM_REPLICATES, seed=0, n_voxels=100,
                         n_areas=SIM_AREAS, noise_fraction=0.5, methods=SHRINKAGE_METHODS, method_params=None,
                         map_fn=map):
    """
    Held-out nrss on pure-noise voxels: each shrinkage method against OLS,
    with a one-sided sign test of 'method below OLS'. Shrunken noise voxels
    should sit near 1 (no better than the mean), OLS above it.
    """
    if replicates < 1:
        raise InvalidParameterError('Need at least one replicate')
    design = default_design(seed) if design is None else design
    run = Replicate(shrinkage_replicate, design, check_hyperparameters(hyper), seed, n_voxels, n_areas,
                     noise_fraction, tuple(methods), dict(method_params or {}))
    return summarize_shrinkage(list(map_fn(run, range(replicates))), methods)


def summarize_shrinkage(rows, methods=SHRINKAGE_METHODS):
    """Wins and one-sided sign-test p-values of each method against OLS."""
    frame = pd.DataFrame(sorted(rows, key=lambda r: r['replicate']))
    wins, p_values = {}, {}
    for name in methods:
        diff = frame[name + '_nrss'] - frame['ols_nrss']
        wins[name] = int(np.sum(diff < 0))
        p_values[name] = (sign_test(wins[name], int(np.sum(diff > 0)))
                          if len(frame) >= MIN_SIGN_TEST_REPLICATES else None)
    return ShrinkageReport(replicates=frame, wins=wins, p_values=p_values)


def standard_error_comparison(design=None, hyper=SIM_HYPER, seed=0, n_voxels=SIM_VOXELS, n_areas=SIM_AREAS,
                              sae_params=None):
    """
    Per-coefficient median standard error of OLS, GCV ridge and SAE on one
    simulated dataset, with the coefficient of variation of the standard
    errors across voxels.
    """
    design = default_design(seed) if design is None else design
    dataset, _ = simulate_sae(design, n_voxels, contiguous_partition(n_voxels, n_areas), hyper, seed)
    fields = {'ols': ols_fit(dataset), 'ridge': ridge_fit_cv(dataset)[0],
              'sae': sae_fit(dataset, hyper, seed=derived_seed(seed, SEED_FIT), **(sae_params or {}))[1]}
    frame = pd.DataFrame({'coefficient': np.arange(dataset.n_features)})
    for name, field in fields.items():
        se = field.std_errors
        frame[name + '_median_se'] = np.median(se, axis=0)
    for name, field in fields.items():
        se = field.std_errors
        mean = se.mean(axis=0)
        frame[name + '_cv'] = np.divide(se.std(axis=0), mean, out=np.full(len(mean), np.nan), where=mean > 0)
    return frame


PriorCheckReport = namedtuple('PriorCheckReport', ['e', 'f', 'df', 'scale', 'ks_statistic', 'p_value',
                                                   'passed', 'gaussian_distance', 'draws', 'source'])


def marginal_prior_check(e, f, draws=10 ** 4, seed=0, source='hierarchical', alpha=0.05):
    """
    Draw nu2 ~ IG(e, f) then z ~ N(0, nu2) and compare z / sqrt(f/e) with a
    t distribution on 2e degrees of freedom by a one-sample KS test.
    `source='reference'` draws from that t directly (null calibration).
    Also reports the KS distance to the Gaussian with the marginal's variance.
    """
    if not e > 1:
        raise InvalidParameterError('Need e > 1 for a finite prior mean, got {}'.format(e))
    if f <= 0:
        raise InvalidParameterError('f must be positive, got {}'.format(f))
    if draws < 1000:
        raise InvalidParameterError('Need at least 1000 draws, got {}'.format(draws))
    rng = np.random.default_rng(seed)
    df, scale = 2.0 * e, float(np.sqrt(f / e))
    if source == 'hierarchical':
        nu2 = draw_inverse_gamma(rng, e, f, size=draws)
        z = rng.standard_normal(draws) * np.sqrt(nu2)
    elif source == 'reference':
        z = stats.t.rvs(df, size=draws, random_state=rng) * scale
    else:
        raise InvalidParameterError('Unknown source {!r}'.format(source))
    scaled = z / scale
    result = stats.kstest(scaled, stats.t(df).cdf)
    gaussian = stats.kstest(scaled, stats.norm(scale=np.sqrt(df / (df - 2.0))).cdf)
    return PriorCheckReport(e=float(e), f=float(f), df=df, scale=scale, ks_statistic=float(result.statistic),
                            p_value=float(result.pvalue), passed=bool(result.pvalue >= alpha),
                            gaussian_distance=float(gaussian.statistic), draws=int(draws), source=source)


TOY_KINDS = ('noiseless', 'noise', 'mixed')


def toy_dataset(kind='mixed', seed=0, n_voxels=TOY_VOXELS, n_rows=TOY_ROWS, n_features=3, n_areas=2):
    """
    Small bundled dataset. 'noiseless': Y = X B exactly; 'noise': pure
    Gaussian noise; 'mixed': signal-to-noise falling off across voxels, the
    last half pure noise.
    """
    if kind not in TOY_KINDS:
        raise InvalidParameterError('Unknown toy dataset {!r}; expected one of {}'.format(kind, ', '.join(TOY_KINDS)))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, n_features))
    beta = rng.standard_normal((n_voxels, n_features))
    noise = rng.standard_normal((n_rows, n_voxels))
    if kind == 'noiseless':
        Y = X @ beta.T
    elif kind == 'noise':
        Y = noise
    else:
        gain = np.linspace(2.0, 0.0, n_voxels)
        gain[n_voxels // 2:] = 0.0
        Y = X @ (beta * gain[:, None]).T + noise
    return Dataset(X, Y, layout_geometry(n_voxels), contiguous_partition(n_voxels, n_areas))
