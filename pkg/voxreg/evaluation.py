"""
Nested cross-validation harness: forward scoring by normalized RSS and
reverse scoring by binary zero-shot classification.

Each outer fold is fitted and scored independently by `evaluate_fold`;
`merge_folds` combines fold results in index order, so folds can be run
in any order or in parallel.
"""
from collections import namedtuple
from functools import partial
import logging
import warnings

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from voxreg.closed_form import RegularizationMap, predict
from voxreg.constants import DEFAULT_DYNAMIC_TRIM, DEFAULT_FOLDS, SEED_PAIRS, SEED_WEIGHTS
from voxreg.elastic_net import fold_assignment
from voxreg.errors import InvalidParameterError
from voxreg.folds import contiguous_folds
from voxreg.methods import fit_method
from voxreg.scoring import rank_weights, voxel_accuracies, zero_shot_brain, zero_shot_pairs
from voxreg.smoothing import check_spec, record_smoothing, select_radius, select_roi_params, smooth_field
from voxreg.util import derived_rng, derived_seed

logger = logging.getLogger(__name__)

# correlated with accuracy in the report, first present wins
_INTENSITY_ORDER = ('ridge_lambda', 'en_lambda1', 'posterior_nu2', 'smoothing_radius')

FoldResult = namedtuple('FoldResult', ['index', 'rss', 'tss', 'voxel_correct', 'voxel_decisions',
                                       'brain_correct', 'brain_decisions', 'regularization',
                                       'pairs_exhaustive', 'in_sample_r', 'out_of_sample_r'])


class EvaluationReport(namedtuple('EvaluationReport', [
        'per_voxel_nrss', 'per_voxel_accuracy', 'fold_correct', 'fold_decisions', 'method',
        'regularization', 'intensity', 'intensity_accuracy_rho', 'pairs_exhaustive', 'linearity'])):
    """Cross-validated scores; whole-brain accuracy is pooled over fold counts."""
    __slots__ = ()

    @property
    def fold_accuracy(self):
        return [c / d if d else float('nan') for c, d in zip(self.fold_correct, self.fold_decisions)]

    @property
    def whole_brain_accuracy(self):
        total = sum(self.fold_decisions)
        return sum(self.fold_correct) / total if total else float('nan')

    def summary(self):
        """JSON-ready summary of the report."""
        def number(x):
            return None if x is None or not np.isfinite(x) else float(x)

        return {
            'method': self.method,
            'whole_brain_accuracy': number(self.whole_brain_accuracy),
            'fold_accuracy': [number(a) for a in self.fold_accuracy],
            'fold_correct': [float(c) for c in self.fold_correct],
            'fold_decisions': [int(d) for d in self.fold_decisions],
            'median_nrss': number(np.nanmedian(self.per_voxel_nrss)) if np.any(np.isfinite(self.per_voxel_nrss)) else None,
            'mean_voxel_accuracy': number(np.nanmean(self.per_voxel_accuracy)),
            'regularization': {'intensity': self.intensity, 'accuracy_spearman': number(self.intensity_accuracy_rho)},
            'pairs_exhaustive': bool(self.pairs_exhaustive),
            'linearity': {k: number(v) for k, v in self.linearity.items()},
            'regularization_metadata': dict(self.regularization.metadata),
        }

    def map_frame(self, geometry):
        """Voxel map: voxel, x, y, z, nrss, accuracy and every regularization column."""
        frame = pd.DataFrame(geometry.coords, columns=['x', 'y', 'z'])
        frame.insert(0, 'voxel', np.arange(len(frame)))
        frame['nrss'] = self.per_voxel_nrss
        frame['accuracy'] = self.per_voxel_accuracy
        for name, values in self.regularization.present():
            frame[name] = values
        return frame


def _columnwise_corr(a, b):
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    denom = np.sqrt(np.sum(a ** 2, axis=0) * np.sum(b ** 2, axis=0))
    return np.divide(np.sum(a * b, axis=0), denom, out=np.full(a.shape[1], np.nan), where=denom > 0)


def linearity_check(field, train, test):
    """
    Per-voxel Pearson correlation between predicted and observed activity,
    in-sample on `train` and out-of-sample on `test` (both Datasets).
    """
    return (_columnwise_corr(predict(field, train.design), train.responses),
            _columnwise_corr(predict(field, test.design), test.responses))


def resolve_smoothing(dataset, smoothing, estimator, split, seed):
    """Tune unset smoothing parameters on `split` (drawn from `seed` when None)."""
    if smoothing.kind == 'ball' and smoothing.radii is None:
        radii = select_radius(dataset, estimator, None, split, seed, smoothing.p)
        return smoothing._replace(radii=radii)
    if smoothing.kind == 'roi' and smoothing.gamma is None:
        gamma, bandwidth = select_roi_params(dataset, estimator, kernel=smoothing.kernel or 'uniform',
                                             split=split, seed=seed)
        return smoothing._replace(gamma=gamma, kernel=smoothing.kernel or 'uniform', bandwidth=bandwidth)
    return check_spec(smoothing, dataset.n_voxels)


def _fitter(spec, smoothing, seed):
    def fit(data):
        field, reg_map = fit_method(data, spec, seed)
        if smoothing is not None:
            field = smooth_field(field, data, smoothing)
        return field, reg_map
    return fit


def training_accuracies(dataset, fit, seed=0, folds=DEFAULT_FOLDS, trim=None):
    """
    Per-voxel zero-shot accuracy from one inner K-fold pass over the
    training rows; `fit` maps a Dataset to (field, reg_map). Dynamic
    datasets use contiguous folds trimmed by `trim` rows (default 5).
    """
    folds = min(folds, dataset.n_rows)
    if dataset.is_dynamic:
        splits = contiguous_folds(dataset.n_rows, folds, DEFAULT_DYNAMIC_TRIM if trim is None else trim)
    else:
        labels = fold_assignment(dataset.n_rows, folds, derived_seed(seed, SEED_WEIGHTS))
        splits = [(np.flatnonzero(labels != k), np.flatnonzero(labels == k)) for k in range(folds)]
    correct = np.zeros(dataset.n_voxels)
    decisions = 0
    for k, (kept, held) in enumerate(splits):
        if len(held) < 2 or len(kept) == 0:
            continue
        field, _ = fit(dataset.take_rows(kept))
        pairs, _ = zero_shot_pairs(len(held), derived_rng(seed, SEED_WEIGHTS, k + 1))
        acc = voxel_accuracies(predict(field, dataset.design[held]), dataset.responses[held], pairs)
        correct += acc * 2 * len(pairs)
        decisions += 2 * len(pairs)
    return correct / decisions if decisions else np.full(dataset.n_voxels, 0.5)


def evaluate_fold(dataset, spec, plan, index, smoothing=None, seed=0, weight_folds=DEFAULT_FOLDS):
    """Fit on the train rows of outer fold `index` and score its test rows."""
    train_rows, test_rows = plan.outer[index]
    train, test = dataset.take_rows(train_rows), dataset.take_rows(test_rows)

    if smoothing is not None:
        smoothing = resolve_smoothing(dataset, smoothing, lambda d: fit_method(d, spec, seed)[0],
                                       plan.inner[index], seed)
    fit = _fitter(spec, smoothing, seed)
    field, reg_map = fit(train)
    if smoothing is not None:
        reg_map = record_smoothing(reg_map, smoothing)

    predicted = predict(field, test.design)
    train_mean = train.responses.mean(axis=0)
    rss = np.sum((test.responses - predicted) ** 2, axis=0)
    tss = np.sum((test.responses - train_mean) ** 2, axis=0)

    pairs, exhaustive = zero_shot_pairs(len(test_rows), derived_rng(seed, SEED_PAIRS, index))
    voxel_acc = voxel_accuracies(predicted, test.responses, pairs)
    weights = rank_weights(training_accuracies(train, fit, seed, weight_folds, plan.trim))
    brain_correct, brain_decisions = zero_shot_brain(predicted, test.responses, weights, pairs)
    in_r, out_r = linearity_check(field, train, test)
    logger.info('Fold %d: %d train, %d test rows, whole-brain %.1f/%d correct', index, len(train_rows),
                len(test_rows), brain_correct, brain_decisions)
    return FoldResult(index=index, rss=rss, tss=tss,
                      voxel_correct=np.nan_to_num(voxel_acc) * 2 * len(pairs), voxel_decisions=2 * len(pairs),
                      brain_correct=brain_correct, brain_decisions=brain_decisions, regularization=reg_map,
                      pairs_exhaustive=exhaustive, in_sample_r=in_r, out_of_sample_r=out_r)


def _mean_maps(maps):
    merged = RegularizationMap.empty(maps[0].n_voxels)
    values = {}
    for name in set(name for reg in maps for name, _ in reg.present()):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', RuntimeWarning)
            values[name] = np.nanmean([getattr(reg, name) for reg in maps], axis=0)
    metadata = {}
    for reg in maps:
        for key, value in reg.metadata.items():
            metadata.setdefault(key, []).append(value)
    return merged._replace(**values).with_metadata(**metadata)


def intensity_correlation(reg_map, accuracy):
    """(name, Spearman rho) of the first regularization intensity present against accuracy."""
    present = dict(reg_map.present())
    for name in _INTENSITY_ORDER:
        if name in present:
            values = present[name]
            keep = np.isfinite(values) & np.isfinite(accuracy)
            if keep.sum() < 3 or np.ptp(values[keep]) == 0 or np.ptp(accuracy[keep]) == 0:
                return name, None
            return name, float(spearmanr(values[keep], accuracy[keep])[0])
    return None, None


def merge_folds(results, method):
    """Combine fold results in index order into an EvaluationReport."""
    if not results:
        raise InvalidParameterError('No fold results to merge')
    results = sorted(results, key=lambda r: r.index)
    rss = np.sum([r.rss for r in results], axis=0)
    tss = np.sum([r.tss for r in results], axis=0)
    constant = tss == 0
    if np.any(constant):
        logger.warning('%d constant-response voxels have no normalized RSS', np.count_nonzero(constant))
    nrss = np.divide(rss, tss, out=np.full_like(rss, np.nan), where=~constant)
    decisions = sum(r.voxel_decisions for r in results)
    accuracy = (np.sum([r.voxel_correct for r in results], axis=0) / decisions if decisions
                else np.full(len(rss), np.nan))
    reg_map = _mean_maps([r.regularization for r in results])
    name, rho = intensity_correlation(reg_map, accuracy)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        linearity = {'in_sample_median_r': float(np.nanmedian(np.mean([r.in_sample_r for r in results], axis=0))),
                     'out_of_sample_median_r': float(np.nanmedian(np.mean([r.out_of_sample_r for r in results],
                                                                          axis=0)))}
    return EvaluationReport(per_voxel_nrss=nrss, per_voxel_accuracy=accuracy,
                            fold_correct=[r.brain_correct for r in results],
                            fold_decisions=[r.brain_decisions for r in results],
                            method=method, regularization=reg_map, intensity=name, intensity_accuracy_rho=rho,
                            pairs_exhaustive=all(r.pairs_exhaustive for r in results), linearity=linearity)


def method_tag(spec, smoothing=None):
    return spec.name if smoothing is None else '{}+{}'.format(spec.name, smoothing.kind)


def run_pipeline(dataset, spec, plan, smoothing=None, seed=0, map_fn=map, weight_folds=DEFAULT_FOLDS):
    """
    Evaluate `spec` (optionally followed by smoothing) over every fold of
    `plan`. `map_fn` may be an executor's map for fold-level parallelism.
    """
    evaluate = partial(evaluate_fold, dataset, spec, plan, smoothing=smoothing, seed=seed,
                       weight_folds=weight_folds)
    results = list(map_fn(evaluate, range(len(plan.outer))))
    report = merge_folds(results, method_tag(spec, smoothing))
    logger.info('%s: whole-brain accuracy %.3f over %d folds', report.method, report.whole_brain_accuracy,
                len(results))
    return report
