"""
The `voxreg` command line: fit, evaluate, smooth, simulate and check.

Settings come from an optional JSON config (`--config`), then the
VOXREG_OUTPUT_DIR environment variable (output directory only), then flags;
flags win. Every subcommand writes its outputs atomically into the output
directory and finishes with a run manifest.
"""
import asyncio
from collections import namedtuple
from functools import partial
import json
import logging
import os
import sys

import mongoengine
from pyparsing import MatchFirst, oneOf

from voxreg import __version__
from voxreg.checks import conditional_checks
from voxreg.closed_form import RegularizationMap
from voxreg.command import (EchoCommand, ManifestCommand, WriteCsvCommand, WriteDatasetCommand,
                            WriteJsonCommand, WriteMatrixCommand)
from voxreg.constants import DEFAULT_FOLDS, OUTPUT_ENV, SIM_AREAS, SIM_REPLICATES, SIM_VOXELS
from voxreg.dataset import contiguous_partition
from voxreg.errors import ConfigError
from voxreg.evaluation import evaluate_fold, merge_folds, method_tag, resolve_smoothing
from voxreg.folds import make_fold_plan
from voxreg.methods import METHODS, estimator_for, fit_method, method_spec
from voxreg.parsing.symbols import (boolean, flag, flag_with_arg, hyper_assignments, int_num, key_for,
                                    name_word, path, real, real_list)
from voxreg.sae import DEFAULT_HYPER, Hyperparameters
from voxreg.simulation import (EXPERIMENT_HYPER, SHRINKAGE_METHODS, TOY_KINDS, Replicate, default_design,
                               marginal_prior_check, misassignment_replicate, shrinkage_replicate, simulate_sae,
                               spread_hyper, standard_error_comparison, summarize_misassignment,
                               summarize_shrinkage, toy_dataset)
from voxreg.smoothing import KERNELS, ball_spec, record_smoothing, roi_spec, smooth_field, smoothed_ols
from voxreg import storage
from voxreg.toolkit import Toolkit
from voxreg.util import run_blocking
from voxreg.workflow import Workflow, register

logger = logging.getLogger(__name__)

EXPERIMENTS = ('misassignment', 'shrinkage', 'standard-errors', 'prior', 'data')

TOY_PREFIX = 'toy:'

RunConfig = namedtuple('RunConfig', ['dataset', 'method', 'params', 'smoothing', 'folds', 'trim', 'seed',
                                     'output_dir', 'threads', 'db', 'replicates', 'voxels', 'areas',
                                     'area_spread', 'noise_fraction', 'draws', 'experiment', 'field',
                                     'weight_folds', 'binary', 'verbose'])

DEFAULT_CONFIG = RunConfig(
    dataset=None,
    method='ridge',
    params={},
    smoothing=None,
    folds=DEFAULT_FOLDS,
    trim=None,
    seed=None,
    output_dir='.',
    threads=None,
    db=None,
    replicates=SIM_REPLICATES,
    voxels=SIM_VOXELS,
    areas=SIM_AREAS,
    area_spread=1.0,
    noise_fraction=None,
    draws=None,
    experiment='misassignment',
    field=None,
    weight_folds=DEFAULT_FOLDS,
    binary=False,
    verbose=False)

# settings that never change what is computed; left out of the config hash
_EXECUTION_ONLY = ('output_dir', 'threads', 'db', 'verbose')

# flag -> (argument type, where it goes, key there)
CONFIG_FLAGS = {
    'dataset': (path, 'config', 'dataset'),
    'method': (oneOf(' '.join(METHODS)), 'config', 'method'),
    'seed': (int_num, 'config', 'seed'),
    'output': (path, 'config', 'output_dir'),
    'folds': (int_num, 'config', 'folds'),
    'trim': (int_num, 'config', 'trim'),
    'threads': (int_num, 'config', 'threads'),
    'db': (name_word, 'config', 'db'),
    'replicates': (int_num, 'config', 'replicates'),
    'voxels': (int_num, 'config', 'voxels'),
    'areas': (int_num, 'config', 'areas'),
    'area-spread': (real, 'config', 'area_spread'),
    'noise-fraction': (real, 'config', 'noise_fraction'),
    'draws': (int_num, 'config', 'draws'),
    'experiment': (oneOf(' '.join(EXPERIMENTS)), 'config', 'experiment'),
    'field': (path, 'config', 'field'),
    'weight-folds': (int_num, 'config', 'weight_folds'),
    'grid': (real_list, 'params', 'grid'),
    'lambda': (real, 'params', 'lam'),
    'l1-grid': (real_list, 'params', 'l1_grid'),
    'l2-grid': (real_list, 'params', 'l2_grid'),
    'en-folds': (int_num, 'params', 'folds'),
    'standardize': (boolean, 'params', 'standardize'),
    'tol': (real, 'params', 'tol'),
    'max-iter': (int_num, 'params', 'max_iter'),
    'hyper': (hyper_assignments, 'params', 'hyper'),
    'burn-in': (int_num, 'params', 'burn_in'),
    'thin': (int_num, 'params', 'thin'),
    'samples': (int_num, 'params', 'samples'),
    'smooth': (oneOf('ball roi none'), 'smoothing', 'kind'),
    'radius': (real, 'smoothing', 'radius'),
    'norm': (int_num, 'smoothing', 'p'),
    'gamma': (real, 'smoothing', 'gamma'),
    'kernel': (oneOf(' '.join(KERNELS)), 'smoothing', 'kernel'),
    'bandwidth': (real, 'smoothing', 'bandwidth'),
}

SWITCHES = {'binary': 'binary', 'verbose': 'verbose'}

SAE_CHAIN_KEYS = ('burn_in', 'thin', 'samples')


def options_expr(names, switches=()):
    """One option of a subcommand: any of the named flags, longest literal first."""
    args = sorted(list(names) + ['config'], key=len, reverse=True)
    exprs = [flag_with_arg(name, path if name == 'config' else CONFIG_FLAGS[name][0]) for name in args]
    return MatchFirst(exprs + [flag(name) for name in sorted(switches, key=len, reverse=True)])


def load_config(path_name):
    """Read a JSON config file into a RunConfig, rejecting unknown keys."""
    try:
        with open(path_name) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError('Cannot read config {}: {}'.format(path_name, e), field='config') from e
    except json.JSONDecodeError as e:
        raise ConfigError('Config {} is not valid JSON: {}'.format(path_name, e), field='config') from e
    if not isinstance(doc, dict):
        raise ConfigError('Config must be a JSON object', field='config')
    unknown = sorted(set(doc) - set(RunConfig._fields))
    if unknown:
        raise ConfigError('Unknown config key {}'.format(unknown[0]), field=unknown[0])
    for key in ('params', 'smoothing'):
        if doc.get(key) is not None and not isinstance(doc[key], dict):
            raise ConfigError('{} must be a JSON object'.format(key), field=key)
    return DEFAULT_CONFIG._replace(**doc)


def resolve_config(options, environ=None):
    """
    JSON config, then the output-directory environment variable, then
    flags. `options` is the parsed flag dictionary.
    """
    environ = os.environ if environ is None else environ
    options = dict(options)
    config = load_config(options.pop('config')) if 'config' in options else DEFAULT_CONFIG
    if environ.get(OUTPUT_ENV):
        config = config._replace(output_dir=environ[OUTPUT_ENV])

    params = dict(config.params or {})
    smoothing = dict(config.smoothing) if config.smoothing else {}
    updates = {}
    for name, (_, target, key) in CONFIG_FLAGS.items():
        flag_key = key_for(name)
        if flag_key not in options:
            continue
        value = options[flag_key]
        if name == 'hyper':
            value = {letter: val for letter, val in value}
        if target == 'config':
            updates[key] = value
        elif target == 'params':
            params[key] = value
        else:
            smoothing[key] = value
    for name, key in SWITCHES.items():
        if name in options:
            updates[key] = True
    if smoothing.get('kind') == 'none':
        smoothing = {}
    config = config._replace(params=params, smoothing=smoothing or None, **updates)
    validate_config(config)
    return config


def validate_config(config):
    if config.seed is None:
        raise ConfigError('A seed is required (--seed or "seed" in the config)', field='seed')
    if not isinstance(config.seed, int) or isinstance(config.seed, bool) or config.seed < 0:
        raise ConfigError('seed must be a non-negative integer', field='seed')
    if config.method not in METHODS:
        raise ConfigError('Unknown method {!r}'.format(config.method), field='method')
    if config.experiment not in EXPERIMENTS:
        raise ConfigError('Unknown experiment {!r}'.format(config.experiment), field='experiment')
    for key in ('folds', 'replicates', 'voxels', 'areas', 'weight_folds', 'threads', 'draws'):
        value = getattr(config, key)
        if value is not None and (not isinstance(value, int) or value < 1):
            raise ConfigError('{} must be a positive integer'.format(key), field=key)
    if config.dataset is not None and not config.dataset.startswith(TOY_PREFIX) \
            and not os.path.exists(config.dataset):
        raise ConfigError('Dataset {} does not exist'.format(config.dataset), field='dataset')
    if config.dataset is not None and config.dataset.startswith(TOY_PREFIX) \
            and config.dataset[len(TOY_PREFIX):] not in TOY_KINDS:
        raise ConfigError('Unknown toy dataset {!r}'.format(config.dataset), field='dataset')
    if config.field is not None and not os.path.isdir(config.field):
        raise ConfigError('Field directory {} does not exist'.format(config.field), field='field')
    if config.smoothing and config.smoothing.get('kind') not in ('ball', 'roi'):
        raise ConfigError('smoothing.kind must be ball or roi', field='smoothing.kind')


def config_doc(config):
    """The part of a config that determines the outputs, as plain JSON."""
    return {key: value for key, value in config._asdict().items() if key not in _EXECUTION_ONLY}


def hyper_from(params, base=DEFAULT_HYPER):
    values = params.get('hyper') or {}
    try:
        return Hyperparameters(**dict(base._asdict(), **values))
    except TypeError as e:
        raise ConfigError('Unknown hyperparameter in {}'.format(sorted(values)), field='params.hyper') from e


def spec_from(config):
    return method_spec(config.method, **(config.params or {}))


def smoothing_from(config):
    doc = config.smoothing
    if not doc:
        return None
    if doc['kind'] == 'ball':
        return ball_spec(doc.get('radius'), doc.get('p', 2))
    return roi_spec(doc.get('gamma'), doc.get('kernel', 'uniform'), doc.get('bandwidth'))


def load_data(config):
    if config.dataset is None:
        raise ConfigError('This command needs a dataset (--dataset)', field='dataset')
    if config.dataset.startswith(TOY_PREFIX):
        return toy_dataset(config.dataset[len(TOY_PREFIX):])
    return storage.load_dataset(config.dataset)


def field_commands(field, reg_map):
    commands = [WriteCsvCommand(name, frame) for name, frame in sorted(storage.field_frames(field).items())]
    commands.append(WriteCsvCommand('regularization.csv', storage.regularization_frame(reg_map)))
    return commands


def _frame_records(report_tuple):
    return [item._asdict() for item in report_tuple]


class RegressionWorkflow(Workflow):

    """Every voxreg subcommand."""

    def __init__(self, toolkit=None):
        super().__init__(toolkit=toolkit)
        dataset_flags = ['dataset', 'method', 'seed', 'output', 'threads', 'db', 'grid', 'lambda', 'l1-grid',
                         'l2-grid', 'en-folds', 'standardize', 'tol', 'max-iter', 'hyper', 'burn-in', 'thin',
                         'samples', 'smooth', 'radius', 'norm', 'gamma', 'kernel', 'bandwidth']

        self.fit_name = 'fit'
        self.fit_expr = options_expr(dataset_flags, ['verbose'])
        self.fit_doc = ('Fit a method to a dataset and write its coefficient field and regularization map\n'
                        '\tfit --dataset DIR|toy:KIND --method ols|ridge|elastic_net|sae --seed N [--smooth ball|roi]')

        self.evaluate_name = 'evaluate'
        self.evaluate_expr = options_expr(dataset_flags + ['folds', 'trim', 'weight-folds'], ['verbose'])
        self.evaluate_doc = ('Nested cross-validation: normalized RSS and zero-shot accuracy maps\n'
                             '\tevaluate --dataset DIR --method NAME --seed N [--folds 10] [--trim 5]')

        self.smooth_name = 'smooth'
        self.smooth_expr = options_expr(['dataset', 'seed', 'output', 'db', 'field', 'smooth', 'radius', 'norm',
                                         'gamma', 'kernel', 'bandwidth'], ['verbose'])
        self.smooth_doc = ('Smooth a stored coefficient field (--field DIR), or fit OLS to smoothed responses\n'
                           '\tsmooth --dataset DIR --smooth ball --radius 2 --seed N')

        self.simulate_name = 'simulate'
        self.simulate_expr = options_expr(['experiment', 'seed', 'output', 'threads', 'db', 'replicates', 'voxels',
                                           'areas', 'area-spread', 'noise-fraction', 'draws', 'hyper', 'burn-in',
                                           'thin', 'samples'], ['binary', 'verbose'])
        self.simulate_doc = ('Simulation studies: ' + ', '.join(EXPERIMENTS) + '\n'
                             '\tsimulate --experiment misassignment --replicates 30 --seed N')

        self.check_name = 'check'
        self.check_expr = options_expr(['seed', 'output', 'db', 'draws', 'hyper'], ['verbose'])
        self.check_doc = ('Sampler self-checks (joint-distribution test, conditional moments, prior shape)\n'
                          '\tcheck --seed N [--draws 20000]')

    def configure(self, parsed, run):
        config = resolve_config(parsed.asDict())
        run.output_dir = config.output_dir
        if config.db:
            mongoengine.connect(config.db)
            self.toolkit.keeps_history = True
        return config

    @register(name='fit_name', expr='fit_expr', doc='fit_doc')
    async def fit(self, parsed, run):
        config = self.configure(parsed, run)
        dataset = load_data(config)
        spec = spec_from(config)
        field, reg_map = await run_blocking(None, fit_method, dataset, spec, config.seed)
        smoothing = smoothing_from(config)
        if smoothing is not None:
            smoothing = resolve_smoothing(dataset, smoothing, estimator_for(spec, config.seed), None, config.seed)
            field = smooth_field(field, dataset, smoothing)
            reg_map = record_smoothing(reg_map, smoothing)
        return field_commands(field, reg_map) + [ManifestCommand('fit', config_doc(config), __version__)]

    @register(name='evaluate_name', expr='evaluate_expr', doc='evaluate_doc')
    async def evaluate(self, parsed, run):
        config = self.configure(parsed, run)
        dataset = load_data(config)
        spec = spec_from(config)
        smoothing = smoothing_from(config)
        plan = make_fold_plan(dataset, config.folds, config.trim, config.seed)
        evaluate = partial(evaluate_fold, dataset, spec, plan, smoothing=smoothing, seed=config.seed,
                           weight_folds=config.weight_folds)
        with run.timed('folds'):
            results = await self.toolkit.gather(evaluate, range(len(plan.outer)), config.threads)
        report = merge_folds(results, method_tag(spec, smoothing))
        logger.info('Whole-brain accuracy %.3f', report.whole_brain_accuracy)
        return [WriteJsonCommand('evaluation.json', report.summary()),
                WriteCsvCommand('evaluation_map.csv', report.map_frame(dataset.geometry)),
                ManifestCommand('evaluate', config_doc(config), __version__)]

    @register(name='smooth_name', expr='smooth_expr', doc='smooth_doc')
    async def smooth(self, parsed, run):
        config = self.configure(parsed, run)
        smoothing = smoothing_from(config)
        if smoothing is None:
            raise ConfigError('smooth needs --smooth ball|roi', field='smoothing.kind')
        dataset = load_data(config)
        if config.field is not None:
            if (smoothing.kind == 'ball' and smoothing.radii is None) or \
                    (smoothing.kind == 'roi' and smoothing.gamma is None):
                raise ConfigError('Smoothing a stored field needs explicit parameters', field='smoothing')
            field = storage.read_field(config.field)
            smoothed = smooth_field(field, dataset, smoothing)
        else:
            smoothing = resolve_smoothing(dataset, smoothing, estimator_for(method_spec('ols'), config.seed), None,
                                          config.seed)
            smoothed = await run_blocking(None, smoothed_ols, dataset, smoothing)
        reg_map = record_smoothing(RegularizationMap.empty(dataset.n_voxels), smoothing)
        return field_commands(smoothed, reg_map) + [ManifestCommand('smooth', config_doc(config), __version__)]

    @register(name='simulate_name', expr='simulate_expr', doc='simulate_doc')
    async def simulate(self, parsed, run):
        config = self.configure(parsed, run)
        params = config.params or {}
        base = EXPERIMENT_HYPER.get(config.experiment, DEFAULT_HYPER)
        hyper = spread_hyper(hyper_from(params, base), config.area_spread)
        sae_params = {key: params[key] for key in SAE_CHAIN_KEYS if key in params}
        design = default_design(config.seed)
        experiment = config.experiment

        if experiment == 'data':
            partition = contiguous_partition(config.voxels, config.areas)
            dataset, truth = simulate_sae(design, config.voxels, partition, hyper, config.seed,
                                          config.noise_fraction or 0.0)
            commands = [WriteDatasetCommand('dataset', dataset, config.binary),
                        WriteMatrixCommand('true_beta.csv', truth.beta)]
        elif experiment == 'misassignment':
            replicate = Replicate(misassignment_replicate, design, hyper, config.seed, config.voxels,
                                  config.areas, sae_params)
            with run.timed('replicates'):
                rows = await self.toolkit.gather(replicate, range(config.replicates), config.threads)
            report = summarize_misassignment(rows)
            commands = [WriteCsvCommand('misassignment.csv', report.replicates),
                        WriteJsonCommand('misassignment.json', {
                            'replicates': len(report.replicates), 'true_wins': report.true_wins,
                            'shuffled_wins': report.shuffled_wins, 'true_p_value': report.true_p_value,
                            'shuffled_p_value': report.shuffled_p_value})]
        elif experiment == 'shrinkage':
            replicate = Replicate(shrinkage_replicate, design, hyper, config.seed, config.voxels, config.areas,
                                  0.5 if config.noise_fraction is None else config.noise_fraction,
                                  SHRINKAGE_METHODS, {'sae': sae_params})
            with run.timed('replicates'):
                rows = await self.toolkit.gather(replicate, range(config.replicates), config.threads)
            report = summarize_shrinkage(rows)
            commands = [WriteCsvCommand('shrinkage.csv', report.replicates),
                        WriteJsonCommand('shrinkage.json', {'replicates': len(report.replicates),
                                                            'wins': report.wins, 'p_values': report.p_values})]
        elif experiment == 'standard-errors':
            frame = await run_blocking(None, standard_error_comparison, design, hyper, config.seed,
                                       config.voxels, config.areas, sae_params)
            commands = [WriteCsvCommand('standard_errors.csv', frame)]
        else:
            report = marginal_prior_check(hyper.e, hyper.f, config.draws or 10 ** 4, config.seed)
            commands = [WriteJsonCommand('prior_check.json', report._asdict())]
        return commands + [ManifestCommand('simulate', config_doc(config), __version__)]

    @register(name='check_name', expr='check_expr', doc='check_doc')
    async def check(self, parsed, run):
        config = self.configure(parsed, run)
        hyper = hyper_from(config.params or {})
        design = default_design(config.seed, n_rows=10, n_features=2)
        report = await run_blocking(None, conditional_checks, hyper, design, contiguous_partition(4, 2),
                                    config.draws or 20000, config.seed)
        prior = marginal_prior_check(hyper.e, hyper.f, 10 ** 4, config.seed)
        doc = {'passed': bool(report.passed and prior.passed), 'draws': report.draws,
               'joint': _frame_records(report.joint), 'moments': _frame_records(report.moments),
               'prior': prior._asdict()}
        status = 'passed' if doc['passed'] else 'FAILED'
        return [WriteJsonCommand('check.json', doc), EchoCommand('Sampler checks {}'.format(status)),
                ManifestCommand('check', config_doc(config), __version__)]


def build_toolkit():
    toolkit = Toolkit()
    RegressionWorkflow(toolkit=toolkit)
    return toolkit


def main(argv=None):
    """Entry point of the `voxreg` console script; returns the exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO if '--verbose' in argv else logging.WARNING,
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    return asyncio.run(build_toolkit().run(argv))
