"""
Reading and writing matrices, dataset directories and fitted fields.

Matrices are either headered CSV or raw binary: an 8-byte magic, u64 rows,
u64 cols (little endian), then rows*cols little-endian float64 in row-major
order. Dataset directories hold a JSON manifest naming dimensions, kind and
file paths (see `voxreg.manifest`).
"""
import json
import logging
import os
import tempfile

import numpy as np
import pandas as pd

from voxreg.constants import MATRIX_MAGIC
from voxreg.dataset import Dataset, RoiPartition, STATIC, VoxelGeometry, lagged_dataset, split_large_rois
from voxreg.errors import DatasetError, ManifestError
from voxreg import manifest as manifests

logger = logging.getLogger(__name__)

_HEADER = np.dtype([('magic', 'S8'), ('rows', '<u8'), ('cols', '<u8')])

MANIFEST_NAME = 'manifest.json'


def atomic_write(path, data):
    """Write bytes to `path` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def matrix_bytes(matrix):
    matrix = np.array(matrix, dtype='<f8', ndmin=2)
    header = np.array([(MATRIX_MAGIC, matrix.shape[0], matrix.shape[1])], dtype=_HEADER)
    return header.tobytes() + np.ascontiguousarray(matrix).tobytes()


def csv_bytes(frame):
    return frame.to_csv(index=False, float_format='%.17g', lineterminator='\n').encode()


def matrix_frame(matrix, prefix='c'):
    matrix = np.array(matrix, dtype=float, ndmin=2)
    return pd.DataFrame(matrix, columns=['{}{}'.format(prefix, j) for j in range(matrix.shape[1])])


def write_matrix(path, matrix):
    """Write a matrix; '.csv' paths get headered CSV, anything else binary."""
    if path.endswith('.csv'):
        atomic_write(path, csv_bytes(matrix_frame(matrix)))
    else:
        atomic_write(path, matrix_bytes(matrix))


def read_matrix(path):
    if path.endswith('.csv'):
        return pd.read_csv(path).to_numpy(dtype=float)

    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < _HEADER.itemsize:
        raise DatasetError('{} is too short to be a matrix file'.format(path))
    if raw[:len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise DatasetError('{} does not start with the matrix magic'.format(path))
    header = np.frombuffer(raw[:_HEADER.itemsize], dtype=_HEADER)[0]
    rows, cols = int(header['rows']), int(header['cols'])
    body = np.frombuffer(raw[_HEADER.itemsize:], dtype='<f8')
    if body.size != rows * cols:
        raise DatasetError('{} holds {} values, header says {}x{}'.format(path, body.size, rows, cols))
    return body.reshape(rows, cols).astype(float)


def _dimension_check(name, matrix, expected):
    if matrix.shape != expected:
        raise ManifestError('{} has shape {}, manifest says {}'.format(name, matrix.shape, expected),
                            field='dimensions')


def load_dataset(path):
    """Load a dataset directory (or a manifest file path)."""
    manifest_path = os.path.join(path, MANIFEST_NAME) if os.path.isdir(path) else path
    root = os.path.dirname(os.path.abspath(manifest_path))
    try:
        with open(manifest_path) as f:
            doc = json.load(f)
    except FileNotFoundError as e:
        raise ManifestError('No manifest at {}'.format(manifest_path), field='manifest') from e
    except json.JSONDecodeError as e:
        raise ManifestError('Manifest is not valid JSON: {}'.format(e), field='manifest') from e
    manifests.validate(doc)

    def resolve(key):
        return os.path.join(root, doc['files'][key])

    for key in manifests.FILE_KEYS:
        if not os.path.isfile(resolve(key)):
            raise ManifestError('files.{} does not exist: {}'.format(key, resolve(key)),
                                field='files.' + key)

    dims = doc['dimensions']
    design = read_matrix(resolve('design'))
    responses = read_matrix(resolve('responses'))

    coords = pd.read_csv(resolve('coordinates')).sort_values('voxel')
    rois = pd.read_csv(resolve('rois'), dtype={'area': str}).sort_values('voxel')
    n_voxels = dims['V']
    for name, frame in (('coordinates', coords), ('rois', rois)):
        if not np.array_equal(frame['voxel'].to_numpy(), np.arange(n_voxels)):
            raise ManifestError('{} must list voxels 0..{} exactly once'.format(name, n_voxels - 1),
                                field='files.' + name)
    geometry = VoxelGeometry(coords[['x', 'y', 'z']].to_numpy(), doc.get('spacing', (1.0, 1.0, 1.0)))
    partition = split_large_rois(RoiPartition(rois['area'].to_numpy()), geometry)

    if manifests.is_dynamic(doc):
        _dimension_check('design', design, (dims['T'], dims['base_features']))
        _dimension_check('responses', responses, (dims['T'], n_voxels))
        dataset = lagged_dataset(design, responses, geometry, partition, manifests.lag_of(doc))
    else:
        _dimension_check('design', design, (dims['T'], dims['P']))
        _dimension_check('responses', responses, (dims['T'], n_voxels))
        dataset = Dataset(design, responses, geometry, partition, STATIC)
    logger.info('Loaded %s dataset: T=%d P=%d V=%d, %d areas', dataset.kind.name,
                dataset.n_rows, dataset.n_features, dataset.n_voxels, partition.n_areas)
    return dataset


def write_dataset(dataset, path, binary=False, base_design=None, base_responses=None):
    """
    Write a dataset directory. Dynamic datasets are stored as their base
    features (pass `base_design` / `base_responses`), static ones as is.
    """
    os.makedirs(path, exist_ok=True)
    ext = '.bin' if binary else '.csv'
    files = {'design': 'design' + ext, 'responses': 'responses' + ext,
             'coordinates': 'coordinates.csv', 'rois': 'rois.csv'}
    if dataset.is_dynamic:
        if base_design is None or base_responses is None:
            raise DatasetError('Dynamic datasets are written from their base design and responses')
        design, responses = base_design, base_responses
        doc = {'kind': 'dynamic', 'lag': dataset.kind.lag,
               'dimensions': {'T': len(design), 'base_features': dataset.kind.base_features,
                              'V': dataset.n_voxels}}
    else:
        design, responses = dataset.design, dataset.responses
        doc = {'kind': 'static',
               'dimensions': {'T': dataset.n_rows, 'P': dataset.n_features, 'V': dataset.n_voxels}}
    doc['spacing'] = [float(s) for s in dataset.geometry.spacing]
    doc['files'] = files

    write_matrix(os.path.join(path, files['design']), design)
    write_matrix(os.path.join(path, files['responses']), responses)
    coords = pd.DataFrame(dataset.geometry.coords, columns=['x', 'y', 'z'])
    coords.insert(0, 'voxel', np.arange(dataset.n_voxels))
    atomic_write(os.path.join(path, files['coordinates']), csv_bytes(coords))
    rois = pd.DataFrame({'voxel': np.arange(dataset.n_voxels), 'area': dataset.rois.assignment})
    atomic_write(os.path.join(path, files['rois']), csv_bytes(rois))
    atomic_write(os.path.join(path, MANIFEST_NAME), json_bytes(doc))


def json_bytes(doc):
    return (json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + '\n').encode()


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('Cannot serialize {!r}'.format(value))


def voxel_frame(matrix, prefix='b'):
    """Voxel-indexed table: voxel column then one column per coefficient."""
    frame = matrix_frame(matrix, prefix)
    frame.insert(0, 'voxel', np.arange(len(frame)))
    return frame


def field_frames(field):
    """CSV tables for a CoefficientField: coefficients, std errors, per-voxel stats."""
    stats = pd.DataFrame({'voxel': np.arange(len(field.noise_variance)),
                          'noise_variance': field.noise_variance,
                          'intercept': field.intercepts})
    return {'coefficients.csv': voxel_frame(field.coefficients),
            'std_errors.csv': voxel_frame(field.std_errors, prefix='se'),
            'voxel_stats.csv': stats}


def regularization_frame(reg_map):
    frame = pd.DataFrame({'voxel': np.arange(reg_map.n_voxels)})
    for name, values in reg_map.present():
        frame[name] = values
    return frame


def read_field(directory, method='loaded'):
    from voxreg.closed_form import CoefficientField

    coefs = pd.read_csv(os.path.join(directory, 'coefficients.csv')).drop(columns='voxel')
    ses = pd.read_csv(os.path.join(directory, 'std_errors.csv')).drop(columns='voxel')
    stats = pd.read_csv(os.path.join(directory, 'voxel_stats.csv'))
    return CoefficientField(coefs.to_numpy(float), ses.to_numpy(float),
                            stats['noise_variance'].to_numpy(float), method,
                            intercepts=stats['intercept'].to_numpy(float))


STATE_BLOCKS = ('u', 'z', 'sigma2', 'alpha2', 'nu2')


def save_state(state, directory):
    """Checkpoint a GibbsState as one binary matrix per block."""
    for block in STATE_BLOCKS:
        values = getattr(state, block)
        write_matrix(os.path.join(directory, block + '.bin'), np.reshape(values, (len(values), -1)))


def load_state(directory):
    from voxreg.sae import GibbsState

    blocks = {block: read_matrix(os.path.join(directory, block + '.bin')) for block in STATE_BLOCKS}
    return GibbsState(u=blocks['u'], z=blocks['z'], sigma2=blocks['sigma2'][:, 0],
                      alpha2=blocks['alpha2'][:, 0], nu2=blocks['nu2'][:, 0])
