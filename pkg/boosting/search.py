import logging
from typing import NamedTuple, Tuple, List

import numpy as np

from boosting.boosting import BoostingParams, Loss, fit, predict, pinball_loss, validate_params, _check_xy
from catalogue.splitting import kfold_indices, make_generator
from interval_metrics.interval_metrics import mae, rmse
from util.errors import DataError, ConfigError
from util.parallel import ordered_map

logger = logging.getLogger(__name__)


class SearchSpace(NamedTuple):
    learning_rate: Tuple[float, float] = (0.0, 1.0)  # open interval
    max_depth: Tuple[int, int] = (2, 30)  # inclusive
    max_leaf_nodes: Tuple[int, int] = (2, 50)
    n_estimators: Tuple[int, int] = (10, 500)

    def midpoint(self, loss: Loss = Loss.SQUARED_ERROR, tau: float = 0.5, seed: int = 0) -> BoostingParams:
        return BoostingParams(
            learning_rate=sum(self.learning_rate) / 2,
            max_depth=sum(self.max_depth) // 2,
            max_leaf_nodes=sum(self.max_leaf_nodes) // 2,
            n_estimators=sum(self.n_estimators) // 2,
            loss=loss, tau=tau, seed=seed)


class CVScore(NamedTuple):
    mae: Tuple[float, ...]
    rmse: Tuple[float, ...]
    validation_loss: Tuple[float, ...]  # MSE or pinball loss, the search objective
    mae_mean: float
    mae_std: float
    rmse_mean: float
    rmse_std: float

    @property
    def loss_mean(self) -> float:
        return float(np.mean(self.validation_loss))


class SearchResult(NamedTuple):
    params: BoostingParams
    score: CVScore
    history: List[Tuple[BoostingParams, float]]


def validate_space(space: SearchSpace):
    lo, hi = space.learning_rate
    if not 0 <= lo <= hi or (hi <= 0):
        raise ConfigError(f'learning_rate range {space.learning_rate} must satisfy 0 <= lo <= hi, hi > 0')
    for name, minimum in (('max_depth', 0), ('max_leaf_nodes', 2), ('n_estimators', 1)):
        lo, hi = getattr(space, name)
        if not minimum <= lo <= hi:
            raise ConfigError(f'{name} range {(lo, hi)} must satisfy {minimum} <= lo <= hi')


def _uniform_open(rng: np.random.Generator, lo: float, hi: float) -> float:
    if lo == hi:
        return float(lo)
    while True:
        value = float(rng.uniform(lo, hi))
        if lo < value < hi:
            return value


def sample_configurations(space: SearchSpace, iters: int, loss: Loss = Loss.SQUARED_ERROR,
                          tau: float = 0.5, seed: int = 0) -> List[BoostingParams]:
    """real parameters uniform on the open range, integers uniform with both ends included"""
    validate_space(space)
    rng = make_generator(seed)
    configurations = []
    for _ in range(iters):
        configurations.append(BoostingParams(
            learning_rate=_uniform_open(rng, *space.learning_rate),
            max_depth=int(rng.integers(space.max_depth[0], space.max_depth[1], endpoint=True)),
            max_leaf_nodes=int(rng.integers(space.max_leaf_nodes[0], space.max_leaf_nodes[1], endpoint=True)),
            n_estimators=int(rng.integers(space.n_estimators[0], space.n_estimators[1], endpoint=True)),
            loss=Loss(loss), tau=tau, seed=seed))
    return configurations


def _fold_score(x, y, params: BoostingParams, held_out: np.ndarray):
    train = np.ones(y.shape[0], dtype=bool)
    train[held_out] = False
    model = fit(x[train], y[train], params)
    pred = predict(model, x[held_out])
    truth = y[held_out]
    if Loss(params.loss) == Loss.PINBALL:
        loss = pinball_loss(truth, pred, params.tau)
    else:
        loss = float(np.mean((truth - pred) ** 2))
    return mae(truth, pred), rmse(truth, pred), loss


def evaluate_cv(features, targets, params: BoostingParams, folds: int = 10, seed: int = 0,
                threads: int = 1) -> CVScore:
    """MAE and RMSE on each held-out fold, mean and population std across folds"""
    validate_params(params)
    x, y = _check_xy(features, targets)
    if y.shape[0] < folds:
        raise DataError(f'{y.shape[0]} samples cannot fill {folds} folds')
    fold_indices = kfold_indices(y.shape[0], folds, seed)
    scores = ordered_map(lambda held_out: _fold_score(x, y, params, held_out), fold_indices, threads)
    fold_mae = tuple(s[0] for s in scores)
    fold_rmse = tuple(s[1] for s in scores)
    return CVScore(
        mae=fold_mae,
        rmse=fold_rmse,
        validation_loss=tuple(s[2] for s in scores),
        mae_mean=float(np.mean(fold_mae)),
        mae_std=float(np.std(fold_mae)),
        rmse_mean=float(np.mean(fold_rmse)),
        rmse_std=float(np.std(fold_rmse)))


def random_search_cv(features, targets, space: SearchSpace = SearchSpace(), folds: int = 10, iters: int = 100,
                     loss: Loss = Loss.SQUARED_ERROR, tau: float = 0.5, seed: int = 0,
                     threads: int = 1) -> SearchResult:
    """argmin of the mean k-fold validation loss over `iters` draws; the earliest draw wins ties"""
    if iters < 1:
        raise ConfigError(f'iters: must be >= 1, got {iters}')
    x, y = _check_xy(features, targets)
    if y.shape[0] < folds:
        raise DataError(f'{y.shape[0]} samples cannot fill {folds} folds')
    best = None
    history = []
    for i, params in enumerate(sample_configurations(space, iters, loss, tau, seed)):
        score = evaluate_cv(x, y, params, folds=folds, seed=seed, threads=threads)
        history.append((params, score.loss_mean))
        logger.info('search %3d/%d  loss %.6g  %s', i + 1, iters, score.loss_mean, params)
        if best is None or score.loss_mean < best[1].loss_mean:
            best = (params, score)
    return SearchResult(best[0], best[1], history)
