import numpy as np
from numpy.testing import assert_allclose
import pytest
from scipy import stats

from voxreg.errors import InvalidParameterError
from voxreg.scoring import (normalized_rss, rank_weights, voxel_accuracies, zero_shot_brain, zero_shot_pairs,
                            zero_shot_voxel)


def test_normalized_rss(rng):
    observed = rng.standard_normal((20, 3))
    assert_allclose(normalized_rss(observed, observed, 0.0), 0.0)
    mean = observed.mean(axis=0)
    assert_allclose(normalized_rss(np.broadcast_to(mean, observed.shape), observed, mean), 1.0)


def test_normalized_rss_constant_voxel():
    observed = np.column_stack([np.ones(5), np.arange(5.0)])
    score = normalized_rss(observed, observed, [1.0, 0.0])
    assert np.isnan(score[0])
    assert score[1] == 0.0


def test_normalized_rss_shape_mismatch():
    with pytest.raises(InvalidParameterError):
        normalized_rss(np.zeros((3, 2)), np.zeros((3, 3)), 0.0)


def test_exhaustive_pairs():
    pairs, exhaustive = zero_shot_pairs(5)
    assert exhaustive
    assert len(pairs) == 10
    assert np.all(pairs[:, 0] < pairs[:, 1])
    assert zero_shot_pairs(1)[0].shape == (0, 2)


@pytest.mark.parametrize('n_items', [150, 151, 400])
def test_sampled_pairs_are_distinct_and_ordered(n_items):
    pairs, exhaustive = zero_shot_pairs(n_items, np.random.default_rng(5), max_pairs=1000)
    assert not exhaustive
    assert len(pairs) == 1000
    i, j = pairs.T
    assert np.all((0 <= i) & (i < j) & (j < n_items))
    assert len({tuple(p) for p in pairs.tolist()}) == 1000


def test_sampled_pairs_cover_the_last_pair():
    n_items = 20
    total = n_items * (n_items - 1) // 2
    pairs, exhaustive = zero_shot_pairs(n_items, np.random.default_rng(0), max_pairs=total - 1)
    assert not exhaustive
    everything = {tuple(p) for p in pairs.tolist()}
    assert everything <= {(i, j) for i in range(n_items) for j in range(i + 1, n_items)}
    assert len(everything) == total - 1


def test_zero_shot_voxel_decisions():
    chosen, correct = zero_shot_voxel([1.0], [0.1, 0.9], [[0.0], [1.0]])
    assert list(chosen) == [0, 1]
    assert list(correct) == [1.0, 1.0]

    chosen, correct = zero_shot_voxel([1.0], [0.9, 0.1], [[0.0], [1.0]])
    assert list(chosen) == [1, 0]
    assert list(correct) == [0.0, 0.0]


def test_zero_shot_voxel_tie_is_half():
    chosen, correct = zero_shot_voxel([0.0], [0.3, 0.7], [[1.0], [2.0]])
    assert list(chosen) == [0, 0]
    assert list(correct) == [0.5, 0.5]


def test_zero_shot_voxel_needs_two_candidates():
    with pytest.raises(InvalidParameterError):
        zero_shot_voxel([1.0], [0.0, 1.0, 2.0], [[0.0], [1.0], [2.0]])


def test_voxel_accuracies_perfect_and_tied(rng):
    observed = rng.standard_normal((8, 2))
    predicted = observed.copy()
    predicted[:, 1] = 0.0
    pairs, _ = zero_shot_pairs(8)
    acc = voxel_accuracies(predicted, observed, pairs)
    assert acc[0] == 1.0
    assert acc[1] == 0.5


def test_voxel_accuracies_match_single_voxel_rule(rng):
    X = rng.standard_normal((6, 2))
    beta = rng.standard_normal(2)
    observed = (X @ beta + rng.standard_normal(6))[:, None]
    pairs, _ = zero_shot_pairs(6)
    expected = np.mean([zero_shot_voxel(beta, observed[[i, j], 0], X[[i, j]])[1] for i, j in pairs])
    assert voxel_accuracies((X @ beta)[:, None], observed, pairs)[0] == pytest.approx(expected)


def test_rank_weights():
    weights = rank_weights([0.9, 0.5, 0.9, np.nan])
    assert_allclose(weights, [1 / 1.5, 1 / 3, 1 / 1.5, 1 / 4])


def test_zero_shot_brain(rng):
    observed = rng.standard_normal((10, 4))
    pairs, _ = zero_shot_pairs(10)
    correct, decisions = zero_shot_brain(observed, observed, np.ones(4), pairs)
    assert decisions == 90
    assert correct == 90.0
    correct, _ = zero_shot_brain(np.zeros((10, 4)), observed, np.ones(4), pairs)
    assert correct == 45.0


def test_zero_shot_brain_weights_select_voxels(rng):
    observed = rng.standard_normal((6, 2))
    predicted = observed.copy()
    predicted[:, 1] = rng.standard_normal(6) * 100
    pairs, _ = zero_shot_pairs(6)
    correct, decisions = zero_shot_brain(predicted, observed, [1.0, 0.0], pairs)
    assert correct == decisions


def test_pure_noise_scores_at_chance(rng):
    observed = rng.standard_normal((2000, 20))
    predicted = rng.standard_normal((2000, 20))
    pairs = np.arange(2000).reshape(1000, 2)
    correct, decisions = zero_shot_brain(predicted, observed, np.ones(20), pairs)
    assert decisions == 2000
    interval = stats.binomtest(int(correct), decisions).proportion_ci(0.999)
    assert interval.low < 0.5 < interval.high
