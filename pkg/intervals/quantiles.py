import math

import numpy as np

from util.errors import DataError, ConfigError

# absorbs rounding in (1 - alpha) * (n + 1) when the exact product is an integer
_INDEX_TOLERANCE = 1e-9


def quantile_rank(n: int, alpha: float) -> int:
    """k = ceil((1 - alpha)(n + 1)); k > n means the quantile is +inf"""
    if not 0 < alpha < 1:
        raise ConfigError(f'alpha: must be inside (0, 1), got {alpha}')
    return max(1, math.ceil((1.0 - alpha) * (n + 1) - _INDEX_TOLERANCE))


def empirical_quantile_hi(v, alpha: float) -> float:
    """k-th smallest of v, +inf when k exceeds len(v)"""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise DataError('empirical quantile of an empty vector')
    k = quantile_rank(v.size, alpha)
    if k > v.size:
        return math.inf
    return float(np.partition(v, k - 1)[k - 1])


def empirical_quantile_lo(v, alpha: float) -> float:
    return -empirical_quantile_hi(-np.asarray(v, dtype=np.float64), alpha)


def rowwise_quantile_hi(m: np.ndarray, alpha: float) -> np.ndarray:
    """empirical_quantile_hi of every row"""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise DataError(f'row-wise quantile needs a non-empty matrix, got shape {m.shape}')
    k = quantile_rank(m.shape[1], alpha)
    if k > m.shape[1]:
        return np.full(m.shape[0], np.inf)
    return np.partition(m, k - 1, axis=1)[:, k - 1]


def rowwise_quantile_lo(m: np.ndarray, alpha: float) -> np.ndarray:
    return -rowwise_quantile_hi(-np.asarray(m, dtype=np.float64), alpha)
