"""Uniform entry point over the four estimators."""
from collections import namedtuple
import logging

from voxreg.closed_form import RegularizationMap, ols_fit, ridge_fit, ridge_fit_cv
from voxreg.constants import BURN_IN, DEFAULT_FOLDS, SAMPLES, SEED_FIT, THIN
from voxreg.elastic_net import elastic_net_cv_field
from voxreg.errors import InvalidParameterError
from voxreg.sae import DEFAULT_HYPER, Hyperparameters, sae_fit
from voxreg.util import derived_seed

logger = logging.getLogger(__name__)

METHODS = ('ols', 'ridge', 'elastic_net', 'sae')

MethodSpec = namedtuple('MethodSpec', ['name', 'params'])

_PARAMS = {
    'ols': {},
    'ridge': {'grid': None, 'lam': None},
    'elastic_net': {'l1_grid': None, 'l2_grid': None, 'folds': DEFAULT_FOLDS, 'standardize': True,
                    'tol': 1e-8, 'max_iter': 10000},
    'sae': {'hyper': DEFAULT_HYPER, 'burn_in': BURN_IN, 'thin': THIN, 'samples': SAMPLES},
}


def method_spec(name, **params):
    """Build a MethodSpec, filling unspecified parameters with their defaults."""
    if name not in METHODS:
        raise InvalidParameterError('Unknown method {!r}; expected one of {}'.format(name, ', '.join(METHODS)))
    unknown = set(params) - set(_PARAMS[name])
    if unknown:
        raise InvalidParameterError('Method {} does not take {}'.format(name, ', '.join(sorted(unknown))))
    merged = dict(_PARAMS[name], **params)
    if name == 'sae' and not isinstance(merged['hyper'], Hyperparameters):
        merged['hyper'] = Hyperparameters(**dict(DEFAULT_HYPER._asdict(), **merged['hyper']))
    return MethodSpec(name, merged)


def fit_method(dataset, spec, seed=0):
    """
    Fit `spec` on `dataset`.

    Returns:
        (CoefficientField, RegularizationMap)
    """
    params = spec.params
    fit_seed = derived_seed(seed, SEED_FIT)
    if spec.name == 'ols':
        return ols_fit(dataset), RegularizationMap.empty(dataset.n_voxels)
    if spec.name == 'ridge':
        if params['lam'] is not None:
            field = ridge_fit(dataset, params['lam'])
            return field, RegularizationMap.empty(dataset.n_voxels).with_values(ridge_lambda=params['lam'])
        return ridge_fit_cv(dataset, params['grid'])
    if spec.name == 'elastic_net':
        field, reg_map, _ = elastic_net_cv_field(dataset, params['l1_grid'], params['l2_grid'], params['folds'],
                                                 fit_seed, params['tol'], params['max_iter'],
                                                 params['standardize'])
        return field, reg_map
    if spec.name == 'sae':
        _, field, reg_map = sae_fit(dataset, params['hyper'], params['burn_in'], params['thin'],
                                    params['samples'], fit_seed)
        return field, reg_map
    raise InvalidParameterError('Unknown method {!r}'.format(spec.name))


def estimator_for(spec, seed=0):
    """Callable Dataset -> CoefficientField, as the smoothing selectors expect."""
    return lambda dataset: fit_method(dataset, spec, seed)[0]
