import json
import os

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from voxreg.closed_form import RegularizationMap, ols_fit
from voxreg.constants import MATRIX_MAGIC
from voxreg.dataset import Dataset, RoiPartition, VoxelGeometry, contiguous_partition, layout_geometry
from voxreg.errors import DatasetError, ManifestError
from voxreg.sae import GibbsState
from voxreg import storage

from conftest import make_dataset


def test_binary_matrix_layout(tmp_path):
    path = str(tmp_path / 'm.bin')
    matrix = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    storage.write_matrix(path, matrix)
    raw = open(path, 'rb').read()
    assert raw[:8] == MATRIX_MAGIC
    assert int.from_bytes(raw[8:16], 'little') == 2
    assert int.from_bytes(raw[16:24], 'little') == 3
    assert len(raw) == 24 + 6 * 8
    assert_array_equal(storage.read_matrix(path), matrix)


def test_csv_matrix_keeps_full_precision(tmp_path):
    path = str(tmp_path / 'm.csv')
    matrix = np.random.default_rng(0).standard_normal((4, 3))
    storage.write_matrix(path, matrix)
    assert_array_equal(storage.read_matrix(path), matrix)


def test_bad_magic(tmp_path):
    path = str(tmp_path / 'm.bin')
    with open(path, 'wb') as f:
        f.write(b'NOTMAGIC' + bytes(16))
    with pytest.raises(DatasetError):
        storage.read_matrix(path)


def test_truncated_body(tmp_path):
    path = str(tmp_path / 'm.bin')
    storage.write_matrix(path, np.ones((3, 3)))
    raw = open(path, 'rb').read()
    with open(path, 'wb') as f:
        f.write(raw[:-8])
    with pytest.raises(DatasetError):
        storage.read_matrix(path)


@pytest.mark.parametrize('binary', [False, True])
def test_dataset_directory(tmp_path, binary):
    data = make_dataset(n_rows=15, n_features=3, n_voxels=6, n_areas=2)
    storage.write_dataset(data, str(tmp_path), binary=binary)
    loaded = storage.load_dataset(str(tmp_path))
    assert_array_equal(loaded.design, data.design)
    assert_array_equal(loaded.responses, data.responses)
    assert_array_equal(loaded.geometry.coords, data.geometry.coords)
    assert list(loaded.rois.assignment) == list(data.rois.assignment)


def test_dynamic_dataset_is_lagged_on_load(tmp_path):
    rng = np.random.default_rng(0)
    base, responses = rng.standard_normal((30, 2)), rng.standard_normal((30, 3))
    from voxreg.dataset import lagged_dataset
    data = lagged_dataset(base, responses, layout_geometry(3), contiguous_partition(3, 1), 4)
    storage.write_dataset(data, str(tmp_path), base_design=base, base_responses=responses)
    loaded = storage.load_dataset(str(tmp_path))
    assert loaded.is_dynamic
    assert loaded.n_features == 8
    assert_array_equal(loaded.design, data.design)
    assert_array_equal(loaded.responses, data.responses)


def test_missing_file_names_the_field(tmp_path):
    data = make_dataset(n_rows=10, n_features=2, n_voxels=4)
    storage.write_dataset(data, str(tmp_path))
    os.remove(str(tmp_path / 'rois.csv'))
    with pytest.raises(ManifestError) as info:
        storage.load_dataset(str(tmp_path))
    assert info.value.field == 'files.rois'


def test_missing_manifest_is_a_manifest_error(tmp_path):
    with pytest.raises(ManifestError) as info:
        storage.load_dataset(str(tmp_path))
    assert info.value.field == 'manifest'


def test_oversized_roi_is_split_on_load(tmp_path):
    rng = np.random.default_rng(0)
    line = VoxelGeometry(np.column_stack([np.arange(450), np.zeros(450), np.zeros(450)]))
    data = Dataset(rng.standard_normal((5, 2)), rng.standard_normal((5, 450)), line, RoiPartition(['roi'] * 450))
    storage.write_dataset(data, str(tmp_path))
    loaded = storage.load_dataset(str(tmp_path))
    assert loaded.rois.n_areas == 4
    assert sorted(loaded.rois.sizes()) == [112, 112, 113, 113]
    assert all(label.startswith('roi.') for label, _ in loaded.rois.areas)


def test_dimension_mismatch(tmp_path):
    data = make_dataset(n_rows=10, n_features=2, n_voxels=4)
    storage.write_dataset(data, str(tmp_path))
    doc = json.load(open(str(tmp_path / 'manifest.json')))
    doc['dimensions']['P'] = 3
    with open(str(tmp_path / 'manifest.json'), 'w') as f:
        json.dump(doc, f)
    with pytest.raises(ManifestError) as info:
        storage.load_dataset(str(tmp_path))
    assert info.value.field == 'dimensions'


def test_field_frames_roundtrip(tmp_path):
    field = ols_fit(make_dataset())
    for name, frame in storage.field_frames(field).items():
        storage.atomic_write(str(tmp_path / name), storage.csv_bytes(frame))
    loaded = storage.read_field(str(tmp_path))
    assert_array_equal(loaded.coefficients, field.coefficients)
    assert_array_equal(loaded.std_errors, field.std_errors)
    assert_array_equal(loaded.noise_variance, field.noise_variance)


def test_regularization_frame_skips_absent_columns():
    reg = RegularizationMap.empty(3).with_values(ridge_lambda=[1.0, 2.0, 3.0])
    frame = storage.regularization_frame(reg)
    assert list(frame.columns) == ['voxel', 'ridge_lambda']


def test_json_bytes_is_canonical():
    assert storage.json_bytes({'b': np.int64(1), 'a': np.array([1.5])}) == b'{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'


def test_state_checkpoint(tmp_path):
    rng = np.random.default_rng(0)
    state = GibbsState(u=rng.standard_normal((2, 3)), z=rng.standard_normal((5, 3)), sigma2=rng.random(5) + 0.1,
                       alpha2=rng.random(2) + 0.1, nu2=rng.random(5) + 0.1)
    storage.save_state(state, str(tmp_path))
    loaded = storage.load_state(str(tmp_path))
    for block in storage.STATE_BLOCKS:
        assert_allclose(getattr(loaded, block), getattr(state, block), rtol=0, atol=0)


def test_atomic_write_leaves_no_temporaries(tmp_path):
    storage.atomic_write(str(tmp_path / 'out' / 'file.txt'), b'data')
    assert os.listdir(str(tmp_path / 'out')) == ['file.txt']
