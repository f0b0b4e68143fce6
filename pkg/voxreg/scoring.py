"""Forward (normalized RSS) and reverse (zero-shot) scoring of fitted fields."""
from itertools import combinations
import logging

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from voxreg.constants import MAX_EXHAUSTIVE_PAIRS
from voxreg.errors import InvalidParameterError

logger = logging.getLogger(__name__)

_PAIR_CHUNK = 512


def normalized_rss(predicted, observed, train_mean):
    """
    Per-voxel sum (y - yhat)^2 / sum (y - train mean)^2. Voxels whose
    denominator is zero are reported as NaN.
    """
    predicted = np.array(predicted, dtype=float, ndmin=2)
    observed = np.array(observed, dtype=float, ndmin=2)
    if predicted.shape != observed.shape:
        raise InvalidParameterError('Predicted {} and observed {} shapes differ'.format(
            predicted.shape, observed.shape))
    rss = np.sum((observed - predicted) ** 2, axis=0)
    tss = np.sum((observed - np.asarray(train_mean, dtype=float)) ** 2, axis=0)
    constant = tss == 0
    if np.any(constant):
        logger.warning('%d constant-response voxels have no normalized RSS', np.count_nonzero(constant))
    return np.divide(rss, tss, out=np.full_like(rss, np.nan), where=~constant)


def zero_shot_pairs(n_items, rng=None, max_pairs=MAX_EXHAUSTIVE_PAIRS):
    """
    All index pairs (i < j) when there are at most `max_pairs`, otherwise a
    seeded sample of `max_pairs` distinct pairs. Returns (pairs, exhaustive).
    """
    total = n_items * (n_items - 1) // 2
    if total <= max_pairs:
        pairs = np.array(list(combinations(range(n_items), 2)), dtype=np.int64).reshape(-1, 2)
        return pairs, True
    rng = rng if rng is not None else np.random.default_rng(0)
    flat = np.sort(rng.choice(total, size=max_pairs, replace=False))
    # invert the row-major enumeration of the upper triangle
    i = (n_items - 0.5 - np.sqrt((n_items - 0.5) ** 2 - 2.0 * flat)).astype(np.int64)
    start = i * n_items - i * (i + 1) // 2
    i = np.where(start > flat, i - 1, i)
    following = (i + 1) * n_items - (i + 1) * (i + 2) // 2
    i = np.where(following <= flat, i + 1, i)
    start = i * n_items - i * (i + 1) // 2
    j = flat - start + i + 1
    return np.column_stack([i, j]), False


def _decide(own, other):
    """1 when the true candidate is strictly closer, 0.5 on a tie, else 0."""
    return np.where(own < other, 1.0, np.where(own == other, 0.5, 0.0))


def zero_shot_voxel(beta, observed, features):
    """
    Single-voxel zero-shot decision between two candidate stimuli.

    Args:
        beta: P coefficients of the voxel
        observed: activity observed for candidate 0 and candidate 1
        features: 2 x P feature rows of the candidates
    Returns:
        (chosen candidate for each observation, correctness score in {0, 0.5, 1})
    """
    features = np.array(features, dtype=float, ndmin=2)
    observed = np.asarray(observed, dtype=float)
    if features.shape[0] != 2 or observed.shape != (2,):
        raise InvalidParameterError('Zero-shot decisions need exactly two candidates')
    predicted = features @ np.asarray(beta, dtype=float)
    dist = np.abs(observed[:, None] - predicted[None, :])
    chosen = np.where(dist[:, 1] < dist[:, 0], 1, 0)
    correct = np.array([_decide(dist[0, 0], dist[0, 1]), _decide(dist[1, 1], dist[1, 0])])
    return chosen, correct


def voxel_accuracies(predicted, observed, pairs):
    """Per-voxel zero-shot accuracy over both decisions of every pair."""
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    if len(pairs) == 0:
        return np.full(observed.shape[1], np.nan)
    total = np.zeros(observed.shape[1])
    for start in range(0, len(pairs), _PAIR_CHUNK):
        i, j = pairs[start:start + _PAIR_CHUNK].T
        yi, yj, pi, pj = observed[i], observed[j], predicted[i], predicted[j]
        total += _decide(np.abs(yi - pi), np.abs(yi - pj)).sum(axis=0)
        total += _decide(np.abs(yj - pj), np.abs(yj - pi)).sum(axis=0)
    return total / (2 * len(pairs))


def rank_weights(accuracies):
    """1 / rank of each voxel when accuracies are sorted in decreasing order; ties share the mean rank."""
    accuracies = np.nan_to_num(np.asarray(accuracies, dtype=float), nan=-np.inf)
    return 1.0 / rankdata(-accuracies, method='average')


def zero_shot_brain(predicted, observed, weights, pairs):
    """
    Whole-brain zero-shot decisions with distance sum_v w_v (y_v - yhat_v)^2.

    Returns:
        (correct count, number of decisions); ties count as half correct.
    """
    if len(pairs) == 0:
        return 0.0, 0
    root = np.sqrt(np.asarray(weights, dtype=float))[None, :]
    dist = cdist(np.asarray(observed) * root, np.asarray(predicted) * root, 'sqeuclidean')
    i, j = pairs.T
    correct = _decide(dist[i, i], dist[i, j]).sum() + _decide(dist[j, j], dist[j, i]).sum()
    return float(correct), 2 * len(pairs)
