import numpy as np
from numpy.testing import assert_allclose
import pytest

from voxreg import simulation
from voxreg.closed_form import ridge_fit_cv
from voxreg.constants import SEED_REPLICATE, SEED_SHUFFLE
from voxreg.dataset import contiguous_partition
from voxreg.errors import InvalidParameterError
from voxreg.sae import DEFAULT_HYPER, max_lag1_autocorrelation, sae_fit
from voxreg.simulation import (SHRINKAGE_HYPER, SIM_HYPER, default_design, holdout_split, marginal_prior_check, misassignment_experiment,
                               shrinkage_experiment, shuffle_partition, sign_test, simulate_sae, spread_hyper,
                               standard_error_comparison, summarize_misassignment, toy_dataset)

SMALL_CHAIN = {'burn_in': 2, 'thin': 1, 'samples': 3}


def test_simulation_is_seeded():
    design = default_design(0, n_rows=30, n_features=3)
    partition = contiguous_partition(10, 2)
    first, truth = simulate_sae(design, 10, partition, seed=4)
    again, _ = simulate_sae(design, 10, partition, seed=4)
    other, _ = simulate_sae(design, 10, partition, seed=5)
    assert np.array_equal(first.responses, again.responses)
    assert not np.array_equal(first.responses, other.responses)
    assert truth.beta.shape == (10, 3)
    assert truth.true_u.shape == (2, 3)


def test_noise_voxels_have_zero_coefficients():
    design = default_design(0, n_rows=30, n_features=3)
    _, truth = simulate_sae(design, 20, contiguous_partition(20, 4), seed=1, noise_fraction=0.5)
    assert len(truth.noise_voxels) == 10
    assert np.all(truth.beta[truth.noise_voxels] == 0.0)
    signal = np.setdiff1d(np.arange(20), truth.noise_voxels)
    assert np.all(np.any(truth.beta[signal] != 0.0, axis=1))


def test_simulation_rejects_bad_arguments():
    design = default_design(0, n_rows=30, n_features=3)
    with pytest.raises(InvalidParameterError):
        simulate_sae(design, 10, contiguous_partition(8, 2))
    with pytest.raises(InvalidParameterError):
        simulate_sae(design, 10, contiguous_partition(10, 2), noise_fraction=1.5)


def test_shuffle_keeps_area_sizes():
    partition = contiguous_partition(23, 4)
    shuffled = shuffle_partition(partition, seed=3)
    assert [label for label, _ in shuffled.areas] == [label for label, _ in partition.areas]
    assert shuffled.sizes() == partition.sizes()
    assert not np.array_equal(shuffled.assignment, partition.assignment)


def test_spread_hyper():
    assert spread_hyper(DEFAULT_HYPER, 4.0).d == 8.0
    with pytest.raises(InvalidParameterError):
        spread_hyper(DEFAULT_HYPER, 0.0)


def test_holdout_split():
    train, test = holdout_split(200, seed=2)
    assert len(test) == 40 and len(train) == 160
    assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(200))


def test_sign_test():
    assert sign_test(0, 0) is None
    assert sign_test(10, 0) == pytest.approx(0.5 ** 10)
    assert sign_test(5, 5, 'two-sided') == pytest.approx(1.0)


def test_summary_needs_ten_replicates_for_p_values():
    rows = [{'replicate': i, 'ridge_nrss': 1.0, 'sae_true_nrss': 0.9, 'sae_shuffled_nrss': 1.1} for i in range(3)]
    report = summarize_misassignment(rows)
    assert report.true_wins == 3 and report.shuffled_wins == 0
    assert report.true_p_value is None and report.shuffled_p_value is None

    rows = [{'replicate': i, 'ridge_nrss': 1.0, 'sae_true_nrss': 0.9, 'sae_shuffled_nrss': 1.1} for i in range(10)]
    report = summarize_misassignment(rows[::-1])
    assert list(report.replicates['replicate']) == list(range(10))
    assert report.true_p_value == pytest.approx(0.5 ** 10)
    assert report.shuffled_p_value == pytest.approx(2 * 0.5 ** 10)


def test_single_misassignment_replicate():
    report = misassignment_experiment(default_design(0, n_rows=40, n_features=3), replicates=1, seed=0,
                                      n_voxels=12, n_areas=2, sae_params=SMALL_CHAIN)
    assert len(report.replicates) == 1
    assert report.true_p_value is None
    assert np.isfinite(report.replicates[['ridge_nrss', 'sae_true_nrss', 'sae_shuffled_nrss']].to_numpy()).all()


def test_shuffle_has_its_own_seed(monkeypatch):
    seeds = []

    def recording_shuffle(partition, seed):
        seeds.append(seed)
        return shuffle_partition(partition, seed)

    monkeypatch.setattr(simulation, 'shuffle_partition', recording_shuffle)
    misassignment_experiment(default_design(0, n_rows=40, n_features=3), replicates=2, seed=5, n_voxels=12,
                             n_areas=2, sae_params=SMALL_CHAIN)
    assert seeds == [simulation.derived_seed(5, SEED_SHUFFLE, 0), simulation.derived_seed(5, SEED_SHUFFLE, 1)]
    assert seeds[0] != simulation.derived_seed(5, SEED_REPLICATE, 0)


def test_misassignment_needs_a_replicate():
    with pytest.raises(InvalidParameterError):
        misassignment_experiment(replicates=0)


def test_map_fn_does_not_change_results():
    design = default_design(0, n_rows=40, n_features=3)
    kwargs = dict(replicates=2, seed=1, n_voxels=12, n_areas=2, sae_params=SMALL_CHAIN)
    first = misassignment_experiment(design, **kwargs)
    backward = misassignment_experiment(design, map_fn=lambda f, xs: [f(x) for x in reversed(list(xs))], **kwargs)
    assert first.replicates.equals(backward.replicates)


def test_single_shrinkage_replicate():
    report = shrinkage_experiment(default_design(0, n_rows=40, n_features=3), replicates=1, seed=0, n_voxels=12,
                                  n_areas=2, methods=('ridge', 'sae'), method_params={'sae': SMALL_CHAIN})
    assert list(report.replicates.columns) == ['replicate', 'ols_nrss', 'ridge_nrss', 'sae_nrss']
    assert report.p_values == {'ridge': None, 'sae': None}


def test_standard_error_comparison():
    frame = standard_error_comparison(default_design(0, n_rows=40, n_features=3), seed=0, n_voxels=12, n_areas=2,
                                      sae_params=SMALL_CHAIN)
    assert list(frame['coefficient']) == [0, 1, 2]
    for name in ('ols', 'ridge', 'sae'):
        assert np.all(frame[name + '_median_se'] >= 0)
        assert name + '_cv' in frame


def test_prior_check_matches_t():
    report = marginal_prior_check(3.0, 2.0, seed=0)
    assert report.df == 6.0
    assert report.scale == pytest.approx(np.sqrt(2.0 / 3.0))
    assert report.ks_statistic < 0.03


def test_reference_draws_calibrate_the_check():
    report = marginal_prior_check(3.0, 2.0, seed=1, source='reference')
    assert report.ks_statistic < 0.03
    assert report.source == 'reference'


def test_large_shape_prior_is_nearly_gaussian():
    assert marginal_prior_check(200.0, 200.0, seed=0).gaussian_distance < 0.02


@pytest.mark.parametrize('kwargs', [{'e': 1.0, 'f': 1.0}, {'e': 3.0, 'f': 0.0}, {'e': 3.0, 'f': 1.0, 'draws': 10},
                                    {'e': 3.0, 'f': 1.0, 'source': 'bootstrap'}])
def test_prior_check_rejects(kwargs):
    with pytest.raises(InvalidParameterError):
        marginal_prior_check(**kwargs)


def test_toy_datasets():
    noiseless = toy_dataset('noiseless')
    assert noiseless.responses.shape == (40, 12)
    beta = np.linalg.lstsq(noiseless.design, noiseless.responses, rcond=None)[0]
    assert_allclose(noiseless.design @ beta, noiseless.responses, atol=1e-10)
    mixed = toy_dataset('mixed')
    noise = toy_dataset('noise')
    assert_allclose(mixed.responses[:, 6:], noise.responses[:, 6:])
    with pytest.raises(InvalidParameterError):
        toy_dataset('movie')


@pytest.mark.slow
def test_replicate_studies_report_sign_tests():
    design = default_design(0, n_rows=80, n_features=4)
    chain = {'burn_in': 20, 'thin': 1, 'samples': 20}
    report = misassignment_experiment(design, replicates=10, seed=0, n_voxels=40, n_areas=4, sae_params=chain)
    assert len(report.replicates) == 10
    assert 0.0 <= report.true_p_value <= 1.0
    assert 0.0 <= report.shuffled_p_value <= 1.0
    shrinkage = shrinkage_experiment(design, replicates=10, seed=0, n_voxels=40, n_areas=4,
                                     method_params={'sae': chain, 'elastic_net': {'folds': 3}})
    assert set(shrinkage.p_values) == {'ridge', 'elastic_net', 'sae'}
    assert all(p is not None for p in shrinkage.p_values.values())


@pytest.mark.slow
def test_correct_areas_beat_ridge_and_shuffled_areas_do_not():
    report = misassignment_experiment(seed=0)
    assert len(report.replicates) == 30
    assert report.true_wins >= 24
    assert report.true_p_value < 0.05
    assert report.shuffled_p_value >= 0.05


@pytest.mark.slow
def test_shrinkage_beats_ols_on_noise_voxels():
    report = shrinkage_experiment(seed=0)
    for name in ('ridge', 'elastic_net', 'sae'):
        assert report.p_values[name] < 0.05, name


@pytest.mark.slow
def test_shrinkage_lowers_standard_errors():
    frame = standard_error_comparison(seed=0)
    assert len(frame) == 8
    assert (frame.ridge_median_se < frame.ols_median_se).all()
    assert (frame.sae_median_se < frame.ols_median_se).all()


@pytest.mark.slow
def test_sae_agrees_with_gcv_ridge_and_mixes():
    dataset, _ = simulate_sae(default_design(0), 500, contiguous_partition(500, 5), SIM_HYPER, seed=3)
    summary, field, _ = sae_fit(dataset, SIM_HYPER, seed=0)
    ridge, _ = ridge_fit_cv(dataset)
    assert np.corrcoef(field.coefficients.ravel(), ridge.coefficients.ravel())[0, 1] > 0.9
    assert max_lag1_autocorrelation(summary.traces) < 0.5


def test_experiment_defaults():
    assert SIM_HYPER.f / (SIM_HYPER.e - 1) < SIM_HYPER.d / (SIM_HYPER.c - 1)
    assert SHRINKAGE_HYPER.d / (SHRINKAGE_HYPER.c - 1) < SHRINKAGE_HYPER.f / (SHRINKAGE_HYPER.e - 1)
    assert simulation.EXPERIMENT_HYPER['shrinkage'] == SHRINKAGE_HYPER
