from typing import NamedTuple, Sequence, List

import numpy as np

from util.constants import SPLIT_FRACTIONS
from util.errors import ConfigError, DataError


class SplitIndices(NamedTuple):
    train: np.ndarray
    calibration: np.ndarray
    test: np.ndarray


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def apportion(n: int, fractions: Sequence[float]) -> List[int]:
    """largest-remainder rounding of n * fractions; ties go to the earlier part"""
    quotas = [n * f for f in fractions]
    sizes = [int(np.floor(q)) for q in quotas]
    remainders = [q - s for q, s in zip(quotas, sizes)]
    order = sorted(range(len(fractions)), key=lambda i: (-remainders[i], i))
    for i in order[:n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split(n: int, fractions: Sequence[float] = SPLIT_FRACTIONS, seed: int = 0) -> SplitIndices:
    """seeded permutation, then contiguous train / calibration / test slices"""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ConfigError(f'split fractions: expected 3 values, got {len(fractions)}')
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f'split fractions {fractions} must be non-negative and sum to 1')
    if n < 3:
        raise DataError(f'cannot split {n} samples three ways')
    sizes = apportion(n, fractions)
    if min(sizes) < 1:
        raise DataError(f'{n} samples with fractions {fractions} leave an empty split {tuple(sizes)}')
    permutation = make_generator(seed).permutation(n)
    n_train, n_cal, _ = sizes
    return SplitIndices(train=permutation[:n_train],
                        calibration=permutation[n_train:n_train + n_cal],
                        test=permutation[n_train + n_cal:])


def kfold_indices(n: int, k: int, seed: int = 0) -> List[np.ndarray]:
    """seeded permutation cut into k contiguous folds of floor(n/k) or ceil(n/k) samples"""
    if k < 2:
        raise ConfigError(f'fold count must be >= 2, got {k}')
    if n < k:
        raise DataError(f'{n} samples cannot fill {k} folds')
    return np.array_split(make_generator(seed).permutation(n), k)
