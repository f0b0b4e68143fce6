"""Module with helper functions for checking raw dataset manifests"""
from functools import partial

from voxreg.constants import DEFAULT_LAG
from voxreg.errors import ManifestError

FILE_KEYS = ('design', 'responses', 'coordinates', 'rois')


def _kind_is(kind, doc):
    """Helper function for checking manifest kinds"""
    return 'kind' in doc and doc['kind'] == kind

is_static = partial(_kind_is, 'static')

is_dynamic = partial(_kind_is, 'dynamic')


def _positive_int(doc, key, field):
    value = doc.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ManifestError('{} must be a positive integer, got {!r}'.format(field, value), field=field)


def lag_of(doc):
    """Lag order h of a dynamic manifest (4 when unset)."""
    return doc.get('lag', DEFAULT_LAG)


def validate(doc):
    """Raise ManifestError naming the first offending field."""
    if not isinstance(doc, dict):
        raise ManifestError('Manifest must be a JSON object', field='manifest')
    if not (is_static(doc) or is_dynamic(doc)):
        raise ManifestError('kind must be "static" or "dynamic", got {!r}'.format(doc.get('kind')),
                            field='kind')

    dims = doc.get('dimensions')
    if not isinstance(dims, dict):
        raise ManifestError('dimensions must be an object', field='dimensions')
    for key in ('T', 'V') + (('base_features',) if is_dynamic(doc) else ('P',)):
        _positive_int(dims, key, 'dimensions.' + key)
    if is_dynamic(doc) and 'lag' in doc:
        _positive_int(doc, 'lag', 'lag')

    files = doc.get('files')
    if not isinstance(files, dict):
        raise ManifestError('files must be an object', field='files')
    for key in FILE_KEYS:
        if not isinstance(files.get(key), str):
            raise ManifestError('files.{} must name a file'.format(key), field='files.' + key)

    spacing = doc.get('spacing', [1.0, 1.0, 1.0])
    if (not isinstance(spacing, list) or len(spacing) != 3
            or not all(isinstance(s, (int, float)) and s > 0 for s in spacing)):
        raise ManifestError('spacing must be three positive numbers', field='spacing')
