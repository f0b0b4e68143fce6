import numpy as np
import pytest

from voxreg.dataset import Dataset, contiguous_partition, layout_geometry


def make_dataset(n_rows=40, n_features=4, n_voxels=12, n_areas=2, noise=1.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, n_features))
    beta = rng.standard_normal((n_voxels, n_features))
    Y = X @ beta.T + noise * rng.standard_normal((n_rows, n_voxels))
    return Dataset(X, Y, layout_geometry(n_voxels), contiguous_partition(n_voxels, n_areas))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def dataset():
    return make_dataset()
