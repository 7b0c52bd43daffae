import itertools
import logging
import math
from typing import NamedTuple, Mapping, Sequence, List

import numpy as np
import scipy.stats

from intervals.intervals import IntervalBatch
from util.constants import EXACT_PERMUTATION_MAX_N
from util.errors import DataError

logger = logging.getLogger(__name__)

MIN_SAMPLES = 4
# permutation statistics equal to the observed one up to rounding count as at least as extreme
_RHO_TOLERANCE = 1e-12
_PERMUTATION_CHUNK = 100000
_CONSTANT_TOLERANCE = 1e-9


class RankCorrelation(NamedTuple):
    rho: float
    p_value: float
    n: int


class PropertyCorrelation(NamedTuple):
    property: str
    rho: float  # nan when undefined
    p_value: float
    n: int

    @property
    def applicable(self) -> bool:
        return not math.isnan(self.rho)


def _centered_ranks(v: np.ndarray, name: str) -> np.ndarray:
    r = scipy.stats.rankdata(v, method='average')
    r = r - r.mean()
    if not np.any(r):
        raise DataError(f'spearman: {name} is constant, rho undefined')
    return r


def _exact_p_value(rx: np.ndarray, ry: np.ndarray, rho: float) -> float:
    """two-sided: share of all orderings of y whose |rho| reaches the observed |rho|"""
    scale = math.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    threshold = abs(rho) - _RHO_TOLERANCE
    perms = itertools.permutations(ry)
    extreme = total = 0
    while True:
        chunk = np.array(list(itertools.islice(perms, _PERMUTATION_CHUNK)))
        if chunk.size == 0:
            break
        extreme += int(np.count_nonzero(np.abs(chunk @ rx) / scale >= threshold))
        total += chunk.shape[0]
    return extreme / total


def _t_p_value(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * scipy.stats.t.sf(abs(t), n - 2)))


def spearman(x, y) -> RankCorrelation:
    """Pearson correlation of mid-ranks; exact permutation p-value up to
    EXACT_PERMUTATION_MAX_N samples, Student-t approximation above"""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DataError(f'spearman: length mismatch {x.size} vs {y.size}')
    n = x.size
    if n < MIN_SAMPLES:
        raise DataError(f'spearman: needs at least {MIN_SAMPLES} samples, got {n}')
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError('spearman: non-finite values')
    rx = _centered_ranks(x, 'x')
    ry = _centered_ranks(y, 'y')
    rho = float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    rho = max(-1.0, min(1.0, rho))
    if n <= EXACT_PERMUTATION_MAX_N:
        p = _exact_p_value(rx, ry, rho)
    else:
        p = _t_p_value(rho, n)
    return RankCorrelation(rho, p, n)


def _is_constant(v: np.ndarray) -> bool:
    # affine rescaling leaves rounding-level spread in otherwise constant widths
    return np.ptp(v) <= _CONSTANT_TOLERANCE * np.max(np.abs(v))


def width_property_report(intervals: IntervalBatch, metadata: Mapping[str, np.ndarray],
                          properties: Sequence[str] = None) -> List[PropertyCorrelation]:
    """Spearman of interval width against each metadata column; infinite widths are skipped"""
    widths = np.asarray(intervals.width, dtype=np.float64).reshape(-1)
    if properties is None:
        properties = sorted(metadata)
    missing = [p for p in properties if p not in metadata]
    if missing:
        raise DataError(f'width properties: missing metadata column(s) {", ".join(missing)}')
    report = []
    for name in properties:
        values = np.asarray(metadata[name], dtype=np.float64).reshape(-1)
        if values.size != widths.size:
            raise DataError(f'width properties: column {name} has {values.size} rows, widths {widths.size}')
        keep = np.isfinite(widths) & np.isfinite(values)
        w, v = widths[keep], values[keep]
        n = int(w.size)
        if n < MIN_SAMPLES or _is_constant(w) or _is_constant(v):
            logger.info('width vs %s: rank correlation not applicable (n=%d)', name, n)
            report.append(PropertyCorrelation(name, math.nan, math.nan, n))
            continue
        rc = spearman(w, v)
        report.append(PropertyCorrelation(name, rc.rho, rc.p_value, rc.n))
    return report
