import logging
import math
from typing import NamedTuple, Tuple, Callable, Mapping, Sequence

import numpy as np

from intervals.intervals import IntervalBatch, Method
from util.errors import DataError, ConfigError
from util.parallel import ordered_map

logger = logging.getLogger(__name__)

EVAL_COLUMNS = ('method', 'alpha', 'picp', 'picp_minus_nominal', 'mpiw', 'n_infinite', 'r2', 'mae', 'rmse')


class MPIW(NamedTuple):
    width: float
    n_infinite: int


class EvalReport(NamedTuple):
    method: str
    alpha: float
    picp: float
    picp_minus_nominal: float
    mpiw: float
    n_infinite: int
    r2: float  # PICP against nominal coverage across a sweep, nan for a single level
    mae: float
    rmse: float


class SweepTable(NamedTuple):
    alphas: Tuple[float, ...]
    rows: Tuple[EvalReport, ...]  # method-major, grid order within a method

    @property
    def methods(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(r.method for r in self.rows))

    def for_method(self, method: str) -> Tuple[EvalReport, ...]:
        return tuple(r for r in self.rows if r.method == method)


class BoundDistances(NamedTuple):
    median_lower: float  # point - lower
    median_upper: float  # upper - point
    median_reference: float  # nan without a reference error column


def _pair(y, yhat, what: str):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if y.shape != yhat.shape:
        raise DataError(f'{what}: length mismatch {y.size} vs {yhat.size}')
    if y.size == 0:
        raise DataError(f'{what}: empty input')
    return y, yhat


def picp(y, intervals: IntervalBatch) -> float:
    """share of targets inside their closed interval"""
    y, lower = _pair(y, intervals.lower, 'picp')
    upper = np.asarray(intervals.upper, dtype=np.float64).reshape(-1)
    return float(np.mean((lower <= y) & (y <= upper)))


def mpiw(intervals: IntervalBatch) -> MPIW:
    width = np.asarray(intervals.width, dtype=np.float64).reshape(-1)
    if width.size == 0:
        raise DataError('mpiw: empty batch')
    finite = np.isfinite(width)
    n_infinite = int(width.size - np.count_nonzero(finite))
    if n_infinite == width.size:
        raise DataError(f'mpiw: all {width.size} intervals are infinite')
    return MPIW(float(np.mean(width[finite])), n_infinite)


def r2(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 'r2')
    if y.size < 2:
        raise DataError('r2: needs at least 2 samples')
    total = np.sum((y - y.mean()) ** 2)
    if total == 0:
        raise DataError('r2: constant reference values')
    return float(1.0 - np.sum((y - yhat) ** 2) / total)


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 'mae')
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 'rmse')
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def evaluate(y, intervals: IntervalBatch) -> EvalReport:
    coverage = picp(y, intervals)
    try:
        width = mpiw(intervals)
    except DataError:
        if intervals.size == 0:
            raise
        logger.warning('%s at alpha=%g: every interval is infinite, mpiw reported as inf',
                       intervals.method.value, intervals.alpha)
        width = MPIW(math.inf, intervals.size)
    return EvalReport(
        method=Method(intervals.method).value,
        alpha=float(intervals.alpha),
        picp=coverage,
        picp_minus_nominal=coverage - (1.0 - intervals.alpha),
        mpiw=width.width,
        n_infinite=width.n_infinite,
        r2=math.nan,
        mae=mae(y, intervals.point),
        rmse=rmse(y, intervals.point))


def validate_alpha_grid(alphas: Sequence[float]) -> Tuple[float, ...]:
    alphas = tuple(float(a) for a in alphas)
    if not alphas:
        raise ConfigError('alpha grid: empty')
    if not all(0 < a < 1 for a in alphas):
        raise ConfigError(f'alpha grid: every level must lie inside (0, 1), got {alphas}')
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ConfigError(f'alpha grid: must be strictly increasing, got {alphas}')
    return alphas


def coverage_r2(rows: Sequence[EvalReport]) -> float:
    """R² with nominal coverage as reference and PICP as prediction"""
    if len(rows) < 2:
        return math.nan
    return r2([1.0 - r.alpha for r in rows], [r.picp for r in rows])


def coverage_sweep(pipelines: Mapping[str, Callable[[float], IntervalBatch]], y,
                   alphas: Sequence[float], threads: int = 1) -> SweepTable:
    """`pipelines` maps a method name to a callable producing that method's intervals at a level"""
    alphas = validate_alpha_grid(alphas)
    rows = []
    for name, pipeline in pipelines.items():
        method_rows = ordered_map(lambda a: evaluate(y, pipeline(a)), alphas, threads)
        fit = coverage_r2(method_rows)
        rows.extend(r._replace(r2=fit) for r in method_rows)
        logger.info('sweep %s: %d levels, coverage r2 %.4f', name, len(alphas), fit)
    return SweepTable(alphas, tuple(rows))


def bound_distances(intervals: IntervalBatch, reference_error=None) -> BoundDistances:
    """median distance of each bound from the point prediction, finite intervals only,
    next to the median of a catalogue error column"""
    finite = intervals.finite
    if not np.any(finite):
        raise DataError('bound distances: no finite interval')
    lower = float(np.median(intervals.point[finite] - intervals.lower[finite]))
    upper = float(np.median(intervals.upper[finite] - intervals.point[finite]))
    reference = math.nan
    if reference_error is not None:
        err = np.asarray(reference_error, dtype=np.float64).reshape(-1)
        err = err[np.isfinite(err)]
        if err.size:
            reference = float(np.median(err))
    return BoundDistances(lower, upper, reference)
