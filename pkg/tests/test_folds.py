import numpy as np
import pytest

from voxreg.dataset import Dataset, contiguous_partition, dynamic_kind, layout_geometry
from voxreg.errors import InsufficientDataError, InvalidFoldsError, InvalidParameterError
from voxreg.folds import contiguous_folds, inner_split, make_fold_plan

from conftest import make_dataset


def dynamic_dataset(n_rows=60):
    rng = np.random.default_rng(0)
    return Dataset(rng.standard_normal((n_rows, 2)), rng.standard_normal((n_rows, 3)), layout_geometry(3),
                   contiguous_partition(3, 1), dynamic_kind(1, 2))


def test_static_plan_partitions_rows():
    plan = make_fold_plan(make_dataset(n_rows=60), outer_folds=10, seed=3)
    assert not plan.contiguous and plan.trim == 0
    tests = [test for _, test in plan.outer]
    assert [len(t) for t in tests] == [6] * 10
    assert np.array_equal(np.sort(np.concatenate(tests)), np.arange(60))
    for train, test in plan.outer:
        assert len(np.intersect1d(train, test)) == 0
        assert len(train) + len(test) == 60


def test_inner_split_stays_inside_outer_train():
    plan = make_fold_plan(make_dataset(n_rows=60), outer_folds=10, seed=3)
    for (train, test), (inner_train, validation) in zip(plan.outer, plan.inner):
        assert len(validation) == 6
        assert np.all(np.isin(validation, train))
        assert np.all(np.isin(inner_train, train))
        assert len(np.intersect1d(inner_train, validation)) == 0
        assert len(np.intersect1d(validation, test)) == 0


def test_plan_is_seeded():
    data = make_dataset(n_rows=60)
    first = make_fold_plan(data, seed=1)
    again = make_fold_plan(data, seed=1)
    other = make_fold_plan(data, seed=2)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(first.outer, again.outer))
    assert not all(np.array_equal(a[1], b[1]) for a, b in zip(first.outer, other.outer))


def test_dynamic_plan_trims_around_test_block():
    plan = make_fold_plan(dynamic_dataset(), outer_folds=6)
    assert plan.contiguous and plan.trim == 5
    for train, test in plan.outer:
        assert np.array_equal(test, np.arange(test[0], test[-1] + 1))
        gaps = np.abs(train[:, None] - test[None, :]).min(axis=1)
        assert np.all(gaps > 5)
    train, test = plan.outer[0]
    assert list(test) == list(range(10))
    assert train[0] == 15


def test_dynamic_inner_validation_is_contiguous():
    plan = make_fold_plan(dynamic_dataset(), outer_folds=6)
    for inner_train, validation in plan.inner:
        assert np.all(np.diff(validation) >= 1)
        gaps = np.abs(inner_train[:, None] - validation[None, :]).min(axis=1)
        assert np.all(gaps > 5)


def test_explicit_trim_overrides_default():
    assert make_fold_plan(dynamic_dataset(), outer_folds=6, trim=0).trim == 0


def test_inner_split_too_small():
    with pytest.raises(InsufficientDataError):
        inner_split([3], seed=0)


def test_fold_errors():
    data = make_dataset(n_rows=20)
    with pytest.raises(InvalidFoldsError):
        make_fold_plan(data, outer_folds=1)
    with pytest.raises(InvalidFoldsError):
        make_fold_plan(data, outer_folds=21)
    with pytest.raises(InvalidParameterError):
        make_fold_plan(data, trim=-1)
    with pytest.raises(InsufficientDataError):
        make_fold_plan(dynamic_dataset(20), outer_folds=2, trim=20)


def test_contiguous_folds_drop_rows_near_the_block():
    splits = contiguous_folds(30, 3, 2)
    assert [list(test) for _, test in splits] == [list(range(10)), list(range(10, 20)), list(range(20, 30))]
    assert list(splits[0][0]) == list(range(12, 30))
    assert list(splits[1][0]) == list(range(8)) + list(range(22, 30))
    assert list(splits[2][0]) == list(range(18))
