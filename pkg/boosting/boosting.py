import logging
from enum import Enum
from typing import NamedTuple, Optional, Tuple, Iterator

import numpy as np

from boosting.trees import RegressionTree, grow_tree, predict_tree
from util.errors import ConfigError, DataError

logger = logging.getLogger(__name__)


class Loss(str, Enum):
    SQUARED_ERROR = 'squared_error'
    PINBALL = 'pinball'


class BoostingParams(NamedTuple):
    learning_rate: float = 0.1
    max_depth: Optional[int] = 3  # None: unbounded
    max_leaf_nodes: Optional[int] = 31  # None: unbounded
    n_estimators: int = 100
    loss: Loss = Loss.SQUARED_ERROR
    tau: float = 0.5  # pinball level, ignored for squared error
    seed: int = 0


class GBRTModel(NamedTuple):
    base_value: float
    trees: Tuple[RegressionTree, ...]
    params: BoostingParams
    n_features: int


def validate_params(params: BoostingParams):
    if not params.learning_rate > 0:
        raise ConfigError(f'learning_rate: must be > 0, got {params.learning_rate}')
    if params.max_depth is not None and params.max_depth < 0:
        raise ConfigError(f'max_depth: must be >= 0, got {params.max_depth}')
    if params.max_leaf_nodes is not None and params.max_leaf_nodes < 2:
        raise ConfigError(f'max_leaf_nodes: must be >= 2, got {params.max_leaf_nodes}')
    if params.n_estimators < 1:
        raise ConfigError(f'n_estimators: must be >= 1, got {params.n_estimators}')
    loss = Loss(params.loss)
    if loss == Loss.PINBALL and not 0 < params.tau < 1:
        raise ConfigError(f'tau: pinball level must be inside (0, 1), got {params.tau}')


def pinball_loss(y, pred, tau: float) -> float:
    """mean of tau * (y - pred) where y >= pred, (tau - 1) * (y - pred) elsewhere"""
    if not 0 < tau < 1:
        raise ConfigError(f'tau: pinball level must be inside (0, 1), got {tau}')
    y = np.asarray(y, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if y.shape != pred.shape:
        raise DataError(f'length mismatch: {y.shape} vs {pred.shape}')
    diff = y - pred
    return float(np.mean(np.where(diff >= 0, tau * diff, (tau - 1) * diff)))


def _check_xy(features, targets):
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if features.ndim == 1:
        features = features[:, None]
    if features.shape[0] != targets.shape[0]:
        raise DataError(f'{features.shape[0]} feature rows but {targets.shape[0]} targets')
    if targets.shape[0] == 0:
        raise DataError('cannot fit on an empty dataset')
    return features, targets


def fit(features, targets, params: BoostingParams = BoostingParams()) -> GBRTModel:
    """stage-wise boosting; squared error starts from mean(y) with mean leaves,
    pinball starts from the tau-quantile of y with tau-quantile leaves"""
    validate_params(params)
    x, y = _check_xy(features, targets)
    loss = Loss(params.loss)
    if np.all(y == y[0]):
        logger.warning('fitting a boosted model on a constant target')

    if loss == Loss.PINBALL:
        base_value = float(np.quantile(y, params.tau))
    else:
        base_value = float(np.mean(y))
    current = np.full(y.shape[0], base_value)
    trees = []
    for _ in range(params.n_estimators):
        residual = y - current
        if loss == Loss.PINBALL:
            gradient = np.where(residual > 0, params.tau, params.tau - 1.0)
            def leaf_value(idx): return float(np.quantile(residual[idx], params.tau))
        else:
            gradient = residual
            def leaf_value(idx): return float(np.mean(residual[idx]))
        tree, leaf_of_sample = grow_tree(x, gradient, leaf_value, params.max_depth, params.max_leaf_nodes)
        current += params.learning_rate * tree.value[leaf_of_sample]
        trees.append(tree)
    return GBRTModel(base_value=base_value, trees=tuple(trees), params=params, n_features=x.shape[1])


def _check_width(model: GBRTModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != model.n_features:
        raise DataError(f'model was trained on {model.n_features} features, got {x.shape[1]}')
    return x


def staged_predict(model: GBRTModel, features) -> Iterator[np.ndarray]:
    x = _check_width(model, features)
    current = np.full(x.shape[0], model.base_value)
    for tree in model.trees:
        current = current + model.params.learning_rate * predict_tree(tree, x)
        yield current


def predict(model: GBRTModel, features) -> np.ndarray:
    x = _check_width(model, features)
    current = np.full(x.shape[0], model.base_value)
    for tree in model.trees:
        current += model.params.learning_rate * predict_tree(tree, x)
    return current


class BoostedRegressor:
    """fit/predict adapter so interval estimators can build fresh boosted models"""

    def __init__(self, params: BoostingParams = BoostingParams()):
        validate_params(params)
        self.params = params
        self.model: Optional[GBRTModel] = None

    def fit(self, features, targets):
        self.model = fit(features, targets, self.params)
        return self

    def predict(self, features) -> np.ndarray:
        if self.model is None:
            raise DataError('regressor used before fit')
        return predict(self.model, features)


def regressor_factory(params: BoostingParams):
    return lambda: BoostedRegressor(params)


def quantile_regressor_factory(params: BoostingParams):
    return lambda tau: BoostedRegressor(params._replace(loss=Loss.PINBALL, tau=tau))
