"""Outer/inner row splits for nested cross-validation."""
from collections import namedtuple
import logging

import numpy as np

from voxreg.constants import DEFAULT_DYNAMIC_TRIM, DEFAULT_FOLDS, SEED_FOLDS
from voxreg.errors import InsufficientDataError, InvalidFoldsError, InvalidParameterError
from voxreg.util import derived_rng

logger = logging.getLogger(__name__)

VALIDATION_FRACTION = 1.0 / 9.0

FoldPlan = namedtuple('FoldPlan', ['outer', 'inner', 'trim', 'seed', 'contiguous'])
FoldPlan.__doc__ = """
outer: list of (train rows, test rows); inner: one (inner-train rows,
validation rows) pair per outer fold, both drawn from the outer train rows.
"""


def _away_from(rows, held_out, trim):
    """Rows farther than `trim` from every held-out row."""
    rows = np.setdiff1d(rows, held_out)
    if trim == 0 or len(rows) == 0:
        return rows
    held_out = np.sort(held_out)
    pos = np.searchsorted(held_out, rows)
    left = np.abs(rows - held_out[np.clip(pos - 1, 0, len(held_out) - 1)])
    right = np.abs(held_out[np.clip(pos, 0, len(held_out) - 1)] - rows)
    return rows[np.minimum(left, right) > trim]


def _check(train, test, what):
    if len(train) == 0 or len(test) == 0:
        raise InsufficientDataError('{} is empty after trimming'.format(what))


def contiguous_folds(n_rows, folds, trim):
    """(train, test) per contiguous test block, training rows kept more than `trim` away from it."""
    rows = np.arange(n_rows)
    return [(_away_from(rows, test, trim), test) for test in np.array_split(rows, folds)]


def inner_split(rows, seed, index=0, contiguous=False, trim=0):
    """
    Split training rows into (inner-train, validation), validation being 1/9
    of them: a random subset, or a contiguous run at a seeded offset with
    `trim` rows dropped on either side.
    """
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    n_val = max(1, int(round(len(rows) * VALIDATION_FRACTION)))
    if n_val >= len(rows):
        raise InsufficientDataError('{} training rows cannot be split for validation'.format(len(rows)))
    rng = derived_rng(seed, SEED_FOLDS, index + 1)
    if contiguous:
        start = int(rng.integers(0, len(rows) - n_val + 1))
        validation = rows[start:start + n_val]
    else:
        validation = np.sort(rng.choice(rows, size=n_val, replace=False))
    train = _away_from(rows, validation, trim)
    _check(train, validation, 'Inner split {}'.format(index))
    return train, validation


def make_fold_plan(dataset, outer_folds=DEFAULT_FOLDS, trim=None, seed=0):
    """
    Seeded random row folds for static datasets; contiguous blocks for
    dynamic ones, whose training rows within `trim` (default 5) of the test
    block are dropped.
    """
    n_rows = dataset.n_rows
    contiguous = dataset.is_dynamic
    trim = (DEFAULT_DYNAMIC_TRIM if contiguous else 0) if trim is None else int(trim)
    if trim < 0:
        raise InvalidParameterError('trim must be non-negative, got {}'.format(trim))
    if outer_folds < 2 or outer_folds > n_rows:
        raise InvalidFoldsError('Need 2 <= folds <= T, got {} folds for {} rows'.format(outer_folds, n_rows))

    if contiguous:
        splits = contiguous_folds(n_rows, outer_folds, trim)
    else:
        perm = derived_rng(seed, SEED_FOLDS).permutation(n_rows)
        splits = [(np.setdiff1d(np.arange(n_rows), chunk), np.sort(chunk))
                  for chunk in np.array_split(perm, outer_folds)]

    outer, inner = [], []
    for k, (train, test) in enumerate(splits):
        _check(train, test, 'Fold {}'.format(k))
        outer.append((train, test))
        inner.append(inner_split(train, seed, k, contiguous, trim))
    logger.info('Fold plan: %d %s folds over %d rows, trim %d', outer_folds,
                'contiguous' if contiguous else 'random', n_rows, trim)
    return FoldPlan(outer=outer, inner=inner, trim=trim, seed=seed, contiguous=contiguous)
