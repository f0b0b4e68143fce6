import json
import os

import numpy as np
import pandas as pd
import pytest

from voxreg import storage
from voxreg.cli import DEFAULT_CONFIG, build_toolkit, config_doc, hyper_from, main, resolve_config
from voxreg.constants import OUTPUT_ENV
from voxreg.errors import ConfigError
from voxreg.sae import DEFAULT_HYPER
from voxreg.simulation import SIM_HYPER, toy_dataset


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def error_record(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def read_manifest(directory):
    with open(os.path.join(directory, 'run_manifest.json')) as f:
        return json.load(f)


def test_parser_collects_options():
    toolkit = build_toolkit()
    parsed = toolkit._parser.parse(['fit', '--seed', '3', '--grid', '1,2.5', '--hyper', 'e=10,f=4',
                                    '--method', 'elastic_net', '--verbose'])
    options = parsed['fit'].asDict()
    assert options['seed'] == 3
    assert options['grid'] == [1.0, 2.5]
    assert options['method'] == 'elastic_net'
    assert 'verbose' in options


def test_resolve_config_precedence(tmp_path):
    config_file = tmp_path / 'config.json'
    config_file.write_text(json.dumps({'seed': 3, 'method': 'ols', 'output_dir': 'from-file'}))
    config = resolve_config({'config': str(config_file), 'seed': 4}, environ={OUTPUT_ENV: 'from-env'})
    assert config.seed == 4
    assert config.method == 'ols'
    assert config.output_dir == 'from-env'
    config = resolve_config({'config': str(config_file), 'output': 'from-flag'}, environ={OUTPUT_ENV: 'from-env'})
    assert config.output_dir == 'from-flag'


def test_resolve_config_routes_method_and_smoothing_flags():
    config = resolve_config({'seed': 0, 'lambda': 2.0, 'hyper': [['e', 10.0]], 'smooth': 'ball', 'radius': 1.5},
                            environ={})
    assert config.params == {'lam': 2.0, 'hyper': {'e': 10.0}}
    assert config.smoothing == {'kind': 'ball', 'radius': 1.5}
    assert resolve_config({'seed': 0, 'smooth': 'none'}, environ={}).smoothing is None


def test_hyper_from_overrides_the_experiment_base():
    assert hyper_from({}) == DEFAULT_HYPER
    hyper = hyper_from({'hyper': {'e': 10.0}}, SIM_HYPER)
    assert hyper == SIM_HYPER._replace(e=10.0)
    with pytest.raises(ConfigError):
        hyper_from({'hyper': {'g': 1.0}})


@pytest.mark.parametrize('options, field', [
    ({}, 'seed'),
    ({'seed': 0, 'folds': 0}, 'folds'),
    ({'seed': 0, 'dataset': '/no/such/dataset'}, 'dataset'),
    ({'seed': 0, 'dataset': 'toy:movie'}, 'dataset'),
])
def test_resolve_config_errors(options, field):
    with pytest.raises(ConfigError) as info:
        resolve_config(options, environ={})
    assert info.value.field == field


def test_unknown_config_key(tmp_path):
    config_file = tmp_path / 'config.json'
    config_file.write_text(json.dumps({'seed': 1, 'colour': 'blue'}))
    with pytest.raises(ConfigError) as info:
        resolve_config({'config': str(config_file)}, environ={})
    assert info.value.field == 'colour'


def test_config_doc_leaves_out_execution_settings():
    doc = config_doc(DEFAULT_CONFIG._replace(seed=1, output_dir='/tmp/x', threads=4))
    assert 'output_dir' not in doc and 'threads' not in doc
    assert doc['seed'] == 1


def test_fit_writes_field(tmp_path):
    out = str(tmp_path / 'fit')
    code = main(['fit', '--dataset', 'toy:mixed', '--method', 'ridge', '--seed', '0', '--output', out])
    assert code == 0
    coefficients = pd.read_csv(os.path.join(out, 'coefficients.csv'))
    assert coefficients.shape == (12, 4)
    assert list(coefficients.columns) == ['voxel', 'b0', 'b1', 'b2']
    regularization = pd.read_csv(os.path.join(out, 'regularization.csv'))
    assert list(regularization.columns) == ['voxel', 'ridge_lambda']
    manifest = read_manifest(out)
    assert manifest['command'] == 'fit'
    assert manifest['seed'] == 0
    assert manifest['outputs'] == ['coefficients.csv', 'regularization.csv', 'std_errors.csv', 'voxel_stats.csv']


def test_rerun_is_byte_identical(tmp_path):
    outputs = []
    for name in ('first', 'second'):
        out = str(tmp_path / name)
        assert main(['fit', '--dataset', 'toy:mixed', '--method', 'elastic_net', '--en-folds', '3',
                     '--seed', '7', '--output', out]) == 0
        outputs.append(out)
    for name in sorted(os.listdir(outputs[0])):
        with open(os.path.join(outputs[0], name), 'rb') as a, open(os.path.join(outputs[1], name), 'rb') as b:
            assert a.read() == b.read(), name


def test_fit_from_dataset_directory(tmp_path):
    data_dir = str(tmp_path / 'data')
    storage.write_dataset(toy_dataset('noiseless'), data_dir)
    out = str(tmp_path / 'out')
    assert main(['fit', '--dataset', data_dir, '--method', 'ols', '--seed', '1', '--output', out]) == 0
    field = storage.read_field(out)
    data = toy_dataset('noiseless')
    beta = np.linalg.lstsq(data.design, data.responses, rcond=None)[0]
    np.testing.assert_allclose(field.coefficients, beta.T, atol=1e-8)


def test_malformed_manifest_exits_with_validation_error(tmp_path, capsys):
    data_dir = tmp_path / 'data'
    storage.write_dataset(toy_dataset('noise'), str(data_dir))
    doc = json.loads((data_dir / 'manifest.json').read_text())
    del doc['dimensions']['P']
    (data_dir / 'manifest.json').write_text(json.dumps(doc))
    code = main(['fit', '--dataset', str(data_dir), '--seed', '0', '--output', str(tmp_path / 'out')])
    assert code == 1
    record = error_record(capsys)
    assert record['error'] == 'manifest'
    assert record['field'] == 'dimensions.P'


def test_directory_without_manifest_exits_with_validation_error(tmp_path, capsys):
    (tmp_path / 'empty').mkdir()
    code = main(['fit', '--dataset', str(tmp_path / 'empty'), '--seed', '0', '--output', str(tmp_path / 'out')])
    assert code == 1
    record = error_record(capsys)
    assert record['error'] == 'manifest'
    assert record['field'] == 'manifest'


def test_missing_seed_exits_with_validation_error(tmp_path, capsys):
    assert main(['fit', '--dataset', 'toy:mixed', '--output', str(tmp_path)]) == 1
    assert error_record(capsys)['field'] == 'seed'


def test_unparseable_command_line(capsys):
    assert main(['fit', '--bogus', '1']) == 1
    assert error_record(capsys)['field'] == 'argv'


def test_runtime_error_exit_code(tmp_path, capsys):
    data_dir = tmp_path / 'data'
    data = toy_dataset('noise')
    rank_deficient = data._replace(design=np.column_stack([data.design[:, :2], data.design[:, 0]]))
    storage.write_dataset(rank_deficient, str(data_dir))
    code = main(['fit', '--dataset', str(data_dir), '--method', 'ols', '--seed', '0', '--output', str(tmp_path)])
    assert code == 2
    assert error_record(capsys)['error'] == 'singular-design'


def test_help(capsys):
    assert main([]) == 0
    out = capsys.readouterr().out
    for name in ('fit', 'evaluate', 'smooth', 'simulate', 'check'):
        assert name + ':' in out


def test_evaluate_noiseless(tmp_path):
    out = str(tmp_path)
    assert main(['evaluate', '--dataset', 'toy:noiseless', '--method', 'ols', '--folds', '4', '--seed', '0',
                 '--threads', '2', '--output', out]) == 0
    with open(os.path.join(out, 'evaluation.json')) as f:
        summary = json.load(f)
    assert summary['whole_brain_accuracy'] == 1.0
    assert summary['fold_decisions'] == [90] * 4
    frame = pd.read_csv(os.path.join(out, 'evaluation_map.csv'))
    assert len(frame) == 12
    assert 'evaluation_map.csv' in read_manifest(out)['outputs']


def test_smooth_stored_field(tmp_path):
    fitted = str(tmp_path / 'fit')
    assert main(['fit', '--dataset', 'toy:mixed', '--method', 'ols', '--seed', '0', '--output', fitted]) == 0
    out = str(tmp_path / 'smooth')
    assert main(['smooth', '--dataset', 'toy:mixed', '--field', fitted, '--smooth', 'ball', '--radius', '0',
                 '--seed', '0', '--output', out]) == 0
    before = pd.read_csv(os.path.join(fitted, 'coefficients.csv'))
    after = pd.read_csv(os.path.join(out, 'coefficients.csv'))
    np.testing.assert_allclose(after.to_numpy(), before.to_numpy())
    assert list(pd.read_csv(os.path.join(out, 'regularization.csv')).columns) == ['voxel', 'smoothing_radius']


def test_smooth_needs_kind(tmp_path, capsys):
    assert main(['smooth', '--dataset', 'toy:mixed', '--seed', '0', '--output', str(tmp_path)]) == 1
    assert error_record(capsys)['field'] == 'smoothing.kind'


def test_smoothed_response_fit(tmp_path):
    out = str(tmp_path)
    assert main(['smooth', '--dataset', 'toy:mixed', '--smooth', 'roi', '--gamma', '0.5', '--seed', '0',
                 '--output', out]) == 0
    assert pd.read_csv(os.path.join(out, 'coefficients.csv')).shape == (12, 4)


def test_simulate_single_replicate(tmp_path):
    out = str(tmp_path)
    assert main(['simulate', '--experiment', 'misassignment', '--replicates', '1', '--voxels', '12',
                 '--areas', '2', '--burn-in', '2', '--thin', '1', '--samples', '3', '--seed', '0',
                 '--output', out]) == 0
    assert len(pd.read_csv(os.path.join(out, 'misassignment.csv'))) == 1
    with open(os.path.join(out, 'misassignment.json')) as f:
        summary = json.load(f)
    assert summary['replicates'] == 1
    assert summary['true_p_value'] is None


def test_simulate_data_round_trips(tmp_path):
    out = str(tmp_path)
    assert main(['simulate', '--experiment', 'data', '--voxels', '12', '--areas', '3', '--seed', '2',
                 '--binary', '--output', out]) == 0
    dataset = storage.load_dataset(os.path.join(out, 'dataset'))
    assert dataset.n_voxels == 12
    assert dataset.rois.n_areas == 3
    assert pd.read_csv(os.path.join(out, 'true_beta.csv')).shape == (12, 8)


def test_simulate_prior(tmp_path):
    out = str(tmp_path)
    assert main(['simulate', '--experiment', 'prior', '--hyper', 'e=4,f=2', '--seed', '0', '--output', out]) == 0
    with open(os.path.join(out, 'prior_check.json')) as f:
        report = json.load(f)
    assert report['df'] == 8.0


def test_check_command(tmp_path, capsys):
    out = str(tmp_path)
    assert main(['check', '--draws', '200', '--seed', '0', '--output', out]) == 0
    assert 'Sampler checks' in capsys.readouterr().out
    with open(os.path.join(out, 'check.json')) as f:
        doc = json.load(f)
    assert len(doc['joint']) == 7
    assert doc['draws'] == 200
