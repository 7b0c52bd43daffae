from typing import NamedTuple

import numpy as np

from catalogue.catalogue import Dataset
from util.errors import DataError


class NormalizationState(NamedTuple):
    feature_min: np.ndarray
    feature_max: np.ndarray
    target_min: float
    target_max: float

    @property
    def target_range(self) -> float:
        return self.target_max - self.target_min


def fit_normalization(d: Dataset) -> NormalizationState:
    if d.n_samples == 0:
        raise DataError('cannot normalise an empty dataset')
    feature_min = d.features.min(axis=0)
    feature_max = d.features.max(axis=0)
    constant = np.flatnonzero(feature_max <= feature_min)
    if constant.size:
        names = [d.feature_names[j] if j < len(d.feature_names) else str(j) for j in constant[:5]]
        raise DataError(f'{constant.size} constant feature column(s), e.g. {", ".join(names)}')
    target_min = float(d.targets.min())
    target_max = float(d.targets.max())
    if not target_max > target_min:
        raise DataError(f'target column "{d.target_name}" is constant')
    return NormalizationState(feature_min, feature_max, target_min, target_max)


def apply_normalization(d: Dataset, state: NormalizationState) -> Dataset:
    """(x - min) / (max - min) with the given state; values outside [0, 1] are kept"""
    if d.n_features != state.feature_min.shape[0]:
        raise DataError(f'dataset has {d.n_features} features, normalisation state has {state.feature_min.shape[0]}')
    features = (d.features - state.feature_min) / (state.feature_max - state.feature_min)
    targets = (d.targets - state.target_min) / state.target_range
    return d._replace(features=features, targets=targets)


def normalize(d: Dataset):
    state = fit_normalization(d)
    return apply_normalization(d, state), state


def denormalize_targets(y, state: NormalizationState) -> np.ndarray:
    return np.asarray(y, dtype=np.float64) * state.target_range + state.target_min


def denormalize(d: Dataset, state: NormalizationState) -> Dataset:
    features = d.features * (state.feature_max - state.feature_min) + state.feature_min
    return d._replace(features=features, targets=denormalize_targets(d.targets, state))
