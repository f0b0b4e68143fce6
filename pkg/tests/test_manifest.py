import pytest

from voxreg.errors import ManifestError
from voxreg import manifest


def valid_doc(**overrides):
    doc = {'kind': 'static', 'dimensions': {'T': 10, 'P': 2, 'V': 4},
           'files': {'design': 'd.csv', 'responses': 'r.csv', 'coordinates': 'c.csv', 'rois': 'a.csv'}}
    doc.update(overrides)
    return doc


def test_kind_predicates():
    assert manifest.is_static({'kind': 'static'})
    assert not manifest.is_dynamic({'kind': 'static'})
    assert not manifest.is_static({})


def test_valid_manifest_passes():
    manifest.validate(valid_doc())
    manifest.validate(valid_doc(kind='dynamic', lag=4, dimensions={'T': 10, 'base_features': 2, 'V': 4}))


@pytest.mark.parametrize('doc, field', [
    (valid_doc(kind='movie'), 'kind'),
    (valid_doc(dimensions={'T': 10, 'V': 4}), 'dimensions.P'),
    (valid_doc(dimensions={'T': 0, 'P': 2, 'V': 4}), 'dimensions.T'),
    (valid_doc(kind='dynamic', lag=0, dimensions={'T': 10, 'base_features': 2, 'V': 4}), 'lag'),
    (valid_doc(files={'design': 'd.csv'}), 'files.responses'),
    (valid_doc(spacing=[1, 0, 1]), 'spacing'),
])
def test_errors_name_the_field(doc, field):
    with pytest.raises(ManifestError) as info:
        manifest.validate(doc)
    assert info.value.field == field
    assert info.value.record()['field'] == field


def test_dynamic_lag_defaults_to_four():
    doc = valid_doc(kind='dynamic', dimensions={'T': 10, 'base_features': 2, 'V': 4})
    manifest.validate(doc)
    assert manifest.lag_of(doc) == 4
    assert manifest.lag_of(dict(doc, lag=2)) == 2
