import logging
from enum import Enum
from typing import NamedTuple, Tuple, Callable, Optional, Union, Sequence

import numpy as np

try:
    from typing import Protocol
except ImportError:  # python < 3.8
    Protocol = object

from catalogue.catalogue import Dataset
from catalogue.normalization import NormalizationState
from catalogue.splitting import kfold_indices, make_generator
from intervals.quantiles import empirical_quantile_hi, rowwise_quantile_hi, rowwise_quantile_lo
from util.constants import BOOTSTRAP_RETRY_BUDGET, DEFAULT_ALPHA
from util.errors import ConfigError, DataError
from util.parallel import ordered_map

logger = logging.getLogger(__name__)


class Method(str, Enum):
    NAIVE = 'naive'
    JACKKNIFE_PLUS_AB = 'jackknife_plus_ab'
    CV = 'cv'
    CV_PLUS = 'cv_plus'
    CV_MINMAX = 'cv_minmax'
    CQR = 'cqr'


CV_METHODS = (Method.CV, Method.CV_PLUS, Method.CV_MINMAX)


class Aggregation(str, Enum):
    MEAN = 'mean'
    MEDIAN = 'median'


class ScoreKind(str, Enum):
    ABSOLUTE_RESIDUAL = 'absolute_residual'
    CQR_SIGNED = 'cqr_signed'


class IntervalConfig(NamedTuple):
    alpha: float = DEFAULT_ALPHA
    method: Method = Method.CQR
    n_resamples: int = 10  # folds for the CV variants, bootstrap count for jackknife+ab
    aggregation: Aggregation = Aggregation.MEAN
    seed: int = 0
    threads: int = 1


class ConformityScores(NamedTuple):
    scores: np.ndarray
    kind: ScoreKind


class IntervalBatch(NamedTuple):
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    method: Method
    # set when every interval is the same shifted band around its point (naive, cv)
    constant_width: Optional[float] = None

    @property
    def width(self) -> np.ndarray:
        if self.constant_width is not None:
            return np.full(self.point.shape, self.constant_width)
        return self.upper - self.lower

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.lower) & np.isfinite(self.upper)

    @property
    def n_infinite(self) -> int:
        return int(np.count_nonzero(~self.finite))

    @property
    def size(self) -> int:
        return self.point.shape[0]


class Regressor(Protocol):
    def fit(self, features, targets): ...

    def predict(self, features) -> np.ndarray: ...


RegressorFactory = Callable[[], Regressor]
QuantileRegressorFactory = Callable[[float], Regressor]


def validate_interval_config(cfg: IntervalConfig):
    if not 0 < cfg.alpha < 1:
        raise ConfigError(f'alpha: must be inside (0, 1), got {cfg.alpha}')
    method = Method(cfg.method)
    if method in CV_METHODS + (Method.JACKKNIFE_PLUS_AB,) and cfg.n_resamples < 2:
        raise ConfigError(f'n_resamples: {method.value} needs at least 2, got {cfg.n_resamples}')
    Aggregation(cfg.aggregation)


def point_prediction(method: Method, model_outputs) -> np.ndarray:
    """naive, cv: the full-data model's predictions (a vector, passed through);
    jackknife+ab, cv+, cv-minmax: an (n_test, n_train) matrix of per-sample out-of-sample
    predictions, averaged; cqr: the (low, high) quantile predictions, midpoint"""
    method = Method(method)
    if method in (Method.NAIVE, Method.CV):
        return np.asarray(model_outputs, dtype=np.float64)
    if method == Method.CQR:
        low, high = model_outputs
        return (np.asarray(low) + np.asarray(high)) / 2.0
    return np.asarray(model_outputs, dtype=np.float64).mean(axis=1)


def _collapse_crossed(point, lower, upper):
    crossed = lower > upper
    if np.any(crossed):
        logger.debug('%d crossed intervals collapsed to the point prediction', int(np.count_nonzero(crossed)))
        lower = np.where(crossed, point, lower)
        upper = np.where(crossed, point, upper)
    return lower, upper


class ShiftedBounds(NamedTuple):
    """[lower_base - Q(alpha), upper_base + Q(alpha)] with Q the conformal quantile of the scores"""
    method: Method
    point: np.ndarray
    lower_base: np.ndarray
    upper_base: np.ndarray
    scores: ConformityScores
    # signed scores can push the bounds past each other; such intervals collapse to the point
    clamp: bool = False

    def at(self, alpha: float) -> IntervalBatch:
        q = empirical_quantile_hi(self.scores.scores, alpha)
        lower = self.lower_base - q
        upper = self.upper_base + q
        if self.clamp:
            lower, upper = _collapse_crossed(self.point, lower, upper)
        constant_width = None
        if np.array_equal(self.lower_base, self.upper_base) and q >= 0:
            constant_width = 2.0 * q
        return IntervalBatch(self.point, lower, upper, alpha, self.method, constant_width)


class PerSampleBounds(NamedTuple):
    """[q-({c_i(x) - R_i}), q+({c_i(x) + R_i})] over training samples i"""
    method: Method
    point: np.ndarray
    centers: np.ndarray  # (n_test, n_train)
    scores: ConformityScores

    def at(self, alpha: float) -> IntervalBatch:
        r = self.scores.scores[None, :]
        lower = rowwise_quantile_lo(self.centers - r, alpha)
        upper = rowwise_quantile_hi(self.centers + r, alpha)
        # at large alpha the two order statistics can pass each other
        lower, upper = _collapse_crossed(self.point, lower, upper)
        return IntervalBatch(self.point, lower, upper, alpha, self.method)


PreparedIntervals = Union[ShiftedBounds, PerSampleBounds]


def _absolute_scores(y, pred) -> ConformityScores:
    return ConformityScores(np.abs(np.asarray(y) - np.asarray(pred)), ScoreKind.ABSOLUTE_RESIDUAL)


def _require_samples(d: Dataset, what: str, minimum: int = 1):
    if d.n_samples < minimum:
        raise DataError(f'{what} needs at least {minimum} samples, got {d.n_samples}')


def _stack_predictions(models, features) -> np.ndarray:
    return np.column_stack([np.asarray(m.predict(features), dtype=np.float64) for m in models])


# naive


class NaiveCalibration(NamedTuple):
    model: Regressor
    scores: ConformityScores

    def prepare(self, test_features) -> ShiftedBounds:
        center = np.asarray(self.model.predict(test_features), dtype=np.float64)
        return ShiftedBounds(Method.NAIVE, point_prediction(Method.NAIVE, center), center, center, self.scores)


def calibrate_naive(train: Dataset, regressor: Regressor) -> NaiveCalibration:
    """scores are the in-sample absolute residuals of a regressor already fitted on `train`"""
    _require_samples(train, 'naive calibration')
    return NaiveCalibration(regressor, _absolute_scores(train.targets, regressor.predict(train.features)))


def naive(train: Dataset, test_features, regressor: Regressor, cfg: IntervalConfig) -> IntervalBatch:
    validate_interval_config(cfg)
    return calibrate_naive(train, regressor).prepare(test_features).at(cfg.alpha)


# jackknife+-after-bootstrap


class JackknifeAbCalibration(NamedTuple):
    models: Tuple[Regressor, ...]
    out_of_bag: np.ndarray  # (n_train, K), True where sample i is absent from resample k
    scores: ConformityScores
    aggregation: Aggregation

    def aggregate(self, predictions: np.ndarray) -> np.ndarray:
        """(n_test, K) model outputs -> (n_test, n_train) leave-i-out aggregates"""
        oob = self.out_of_bag
        if Aggregation(self.aggregation) == Aggregation.MEAN:
            weights = oob / oob.sum(axis=1, keepdims=True)
            return predictions @ weights.T
        patterns, inverse = np.unique(oob, axis=0, return_inverse=True)
        per_pattern = np.column_stack([np.median(predictions[:, p], axis=1) for p in patterns])
        return per_pattern[:, np.asarray(inverse).reshape(-1)]

    def prepare(self, test_features) -> PerSampleBounds:
        centers = self.aggregate(_stack_predictions(self.models, test_features))
        method = Method.JACKKNIFE_PLUS_AB
        return PerSampleBounds(method, point_prediction(method, centers), centers, self.scores)


def draw_bootstrap(n: int, k: int, rng: np.random.Generator):
    """k resamples of size n with replacement, redrawn until every index is out-of-bag somewhere"""
    for attempt in range(1, BOOTSTRAP_RETRY_BUDGET + 1):
        samples = rng.integers(0, n, size=(k, n))
        in_bag = np.zeros((n, k), dtype=bool)
        for j in range(k):
            in_bag[samples[j], j] = True
        out_of_bag = ~in_bag
        if np.all(out_of_bag.any(axis=1)):
            if attempt > 1:
                logger.info('bootstrap resamples redrawn %d time(s) to leave every sample out once', attempt - 1)
            return samples, out_of_bag
    raise DataError(f'some training sample stayed in every one of {k} bootstrap resamples '
                    f'after {BOOTSTRAP_RETRY_BUDGET} redraws; increase n_resamples')


def calibrate_jackknife_plus_ab(train: Dataset, regressor_factory: RegressorFactory,
                                cfg: IntervalConfig) -> JackknifeAbCalibration:
    validate_interval_config(cfg)
    _require_samples(train, 'jackknife+-after-bootstrap', 2)
    samples, out_of_bag = draw_bootstrap(train.n_samples, cfg.n_resamples, make_generator(cfg.seed))
    x, y = train.features, train.targets
    models = tuple(ordered_map(lambda s: regressor_factory().fit(x[s], y[s]), samples, cfg.threads))
    calibration = JackknifeAbCalibration(models, out_of_bag, None, Aggregation(cfg.aggregation))
    train_predictions = _stack_predictions(models, x)
    loo = _diagonal_aggregate(calibration, train_predictions)
    return calibration._replace(scores=_absolute_scores(y, loo))


def _diagonal_aggregate(calibration: JackknifeAbCalibration, predictions: np.ndarray) -> np.ndarray:
    # row i: aggregate of the models that never saw sample i, at X_i
    oob = calibration.out_of_bag
    if Aggregation(calibration.aggregation) == Aggregation.MEAN:
        return (predictions * oob).sum(axis=1) / oob.sum(axis=1)
    return np.array([np.median(predictions[i, oob[i]]) for i in range(oob.shape[0])])


def jackknife_plus_ab(train: Dataset, test_features, regressor_factory: RegressorFactory,
                      cfg: IntervalConfig) -> IntervalBatch:
    return calibrate_jackknife_plus_ab(train, regressor_factory, cfg).prepare(test_features).at(cfg.alpha)


# cv, cv+, cv-minmax


class CVCalibration(NamedTuple):
    method: Method
    full_model: Optional[Regressor]  # fitted on the whole training set, cv only
    fold_models: Tuple[Regressor, ...]
    fold_of_sample: np.ndarray
    scores: ConformityScores

    def prepare(self, test_features) -> PreparedIntervals:
        fold_predictions = _stack_predictions(self.fold_models, test_features)
        if self.method == Method.CV:
            center = np.asarray(self.full_model.predict(test_features), dtype=np.float64)
            return ShiftedBounds(Method.CV, point_prediction(Method.CV, center), center, center, self.scores)
        centers = fold_predictions[:, self.fold_of_sample]
        point = point_prediction(self.method, centers)
        if self.method == Method.CV_PLUS:
            return PerSampleBounds(Method.CV_PLUS, point, centers, self.scores)
        return ShiftedBounds(Method.CV_MINMAX, point,
                             fold_predictions.min(axis=1), fold_predictions.max(axis=1), self.scores)


def calibrate_cv_family(train: Dataset, regressor_factory: RegressorFactory, cfg: IntervalConfig,
                        full_model: Regressor = None) -> CVCalibration:
    """out-of-fold absolute residuals from K fold models; `full_model` may be a regressor
    already fitted on all of `train` (plain cv only)"""
    validate_interval_config(cfg)
    method = Method(cfg.method)
    if method not in CV_METHODS:
        raise ConfigError(f'method: {method.value} is not a cross-validation method')
    n = train.n_samples
    if n < cfg.n_resamples:
        raise DataError(f'{n} training samples cannot fill {cfg.n_resamples} folds')
    folds = kfold_indices(n, cfg.n_resamples, cfg.seed)
    fold_of_sample = np.empty(n, dtype=np.intp)
    for k, held_out in enumerate(folds):
        fold_of_sample[held_out] = k
    x, y = train.features, train.targets

    def fit_fold(k):
        keep = fold_of_sample != k
        return regressor_factory().fit(x[keep], y[keep])

    fold_models = tuple(ordered_map(fit_fold, range(len(folds)), cfg.threads))
    out_of_fold = np.empty(n)
    for k, held_out in enumerate(folds):
        out_of_fold[held_out] = fold_models[k].predict(x[held_out])
    if method == Method.CV and full_model is None:
        full_model = regressor_factory().fit(x, y)
    return CVCalibration(method, full_model if method == Method.CV else None, fold_models, fold_of_sample,
                         _absolute_scores(y, out_of_fold))


def cv_family(train: Dataset, test_features, regressor_factory: RegressorFactory, cfg: IntervalConfig,
              full_model: Regressor = None) -> IntervalBatch:
    return calibrate_cv_family(train, regressor_factory, cfg, full_model).prepare(test_features).at(cfg.alpha)


# conformalised quantile regression


def _ordered_quantiles(low, high):
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    crossed = low > high
    if np.any(crossed):
        logger.debug('%d crossed quantile predictions swapped', int(np.count_nonzero(crossed)))
        low, high = np.minimum(low, high), np.maximum(low, high)
    return low, high


class CQRCalibration(NamedTuple):
    low_model: Regressor
    high_model: Regressor
    scores: ConformityScores

    def prepare(self, test_features) -> ShiftedBounds:
        low, high = _ordered_quantiles(self.low_model.predict(test_features), self.high_model.predict(test_features))
        return ShiftedBounds(Method.CQR, point_prediction(Method.CQR, (low, high)), low, high, self.scores, clamp=True)


def calibrate_cqr(train_proper: Dataset, calibration: Dataset,
                  quantile_regressor_factory: QuantileRegressorFactory, cfg: IntervalConfig) -> CQRCalibration:
    """E_i = max(q_lo(X_i) - Y_i, Y_i - q_hi(X_i)) on the calibration set"""
    validate_interval_config(cfg)
    _require_samples(train_proper, 'cqr proper training set')
    if calibration is None or calibration.n_samples == 0:
        raise DataError('cqr needs a non-empty calibration set')
    alpha = cfg.alpha
    low_model = quantile_regressor_factory(alpha / 2).fit(train_proper.features, train_proper.targets)
    high_model = quantile_regressor_factory(1 - alpha / 2).fit(train_proper.features, train_proper.targets)
    low, high = _ordered_quantiles(low_model.predict(calibration.features), high_model.predict(calibration.features))
    y = calibration.targets
    scores = ConformityScores(np.maximum(low - y, y - high), ScoreKind.CQR_SIGNED)
    return CQRCalibration(low_model, high_model, scores)


def cqr(train_proper: Dataset, calibration: Dataset, test_features,
        quantile_regressor_factory: QuantileRegressorFactory, cfg: IntervalConfig) -> IntervalBatch:
    return calibrate_cqr(train_proper, calibration, quantile_regressor_factory, cfg) \
        .prepare(test_features).at(cfg.alpha)


# dispatch


Calibration = Union[NaiveCalibration, JackknifeAbCalibration, CVCalibration, CQRCalibration]


def calibrate(cfg: IntervalConfig, train: Dataset, *,
              calibration: Dataset = None,
              regressor_factory: RegressorFactory = None,
              quantile_regressor_factory: QuantileRegressorFactory = None,
              fitted_regressor: Regressor = None) -> Calibration:
    """CQR calibrates on `calibration`, every other method on `train`;
    `fitted_regressor` (fitted on all of `train`) serves naive and plain cv"""
    validate_interval_config(cfg)
    method = Method(cfg.method)
    if method == Method.CQR:
        if quantile_regressor_factory is None:
            raise ConfigError('cqr needs a quantile regressor factory')
        return calibrate_cqr(train, calibration, quantile_regressor_factory, cfg)
    if method == Method.NAIVE:
        if fitted_regressor is None:
            if regressor_factory is None:
                raise ConfigError('naive needs a fitted regressor or a regressor factory')
            fitted_regressor = regressor_factory().fit(train.features, train.targets)
        return calibrate_naive(train, fitted_regressor)
    if regressor_factory is None:
        raise ConfigError(f'{method.value} needs a regressor factory')
    if method == Method.JACKKNIFE_PLUS_AB:
        return calibrate_jackknife_plus_ab(train, regressor_factory, cfg)
    return calibrate_cv_family(train, regressor_factory, cfg, full_model=fitted_regressor)


def rescale_interval(batch: IntervalBatch, offset: float, scale: float) -> IntervalBatch:
    """affine map of every bound, scale > 0; infinite bounds stay infinite"""
    return batch._replace(point=batch.point * scale + offset,
                          lower=batch.lower * scale + offset,
                          upper=batch.upper * scale + offset,
                          constant_width=None if batch.constant_width is None else batch.constant_width * scale)


def denormalize_interval(batch: IntervalBatch, state: NormalizationState) -> IntervalBatch:
    return rescale_interval(batch, state.target_min, state.target_range)


def interval_batch(point: Sequence[float], lower: Sequence[float], upper: Sequence[float],
                   alpha: float = DEFAULT_ALPHA, method: Method = Method.NAIVE) -> IntervalBatch:
    point = np.asarray(point, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if not point.shape == lower.shape == upper.shape:
        raise DataError(f'interval arrays differ in shape: {point.shape}, {lower.shape}, {upper.shape}')
    if np.any(lower > upper):
        raise DataError('interval lower bound above upper bound')
    return IntervalBatch(point, lower, upper, alpha, Method(method))
