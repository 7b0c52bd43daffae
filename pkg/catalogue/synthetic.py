from enum import Enum

import numpy as np

from catalogue.catalogue import Dataset
from catalogue.splitting import make_generator
from util.errors import ConfigError


class NoiseLaw(str, Enum):
    CONSTANT = 'constant'
    LINEAR = 'linear'
    SINUSOIDAL = 'sinusoidal'


X_RANGE = (-5.0, 5.0)


def true_mean(x: np.ndarray) -> np.ndarray:
    return 2.0 * np.sin(x) + 0.5 * x


def noise_scale(x: np.ndarray, law: NoiseLaw, scale: float) -> np.ndarray:
    if law == NoiseLaw.CONSTANT:
        return np.full_like(x, scale)
    if law == NoiseLaw.LINEAR:
        return scale * (1.0 + np.abs(x))
    if law == NoiseLaw.SINUSOIDAL:
        return scale * (1.0 + 0.8 * np.sin(x))
    raise NotImplementedError


def parse_noise_law(noise_law) -> NoiseLaw:
    try:
        return NoiseLaw(noise_law)
    except ValueError:
        raise ConfigError(f'unknown noise law "{noise_law}", known: {", ".join(l.value for l in NoiseLaw)}')


def synth_heteroscedastic(n: int, seed: int = 0, noise_law='linear', *,
                          scale: float = 1.0, n_features: int = 1) -> Dataset:
    """x ~ U(-5, 5) in column 0 (extra columns are uniform nuisance features),
    y = mu(x) + sigma(x) * eps with eps ~ N(0, 1); mu and sigma land in metadata"""
    law = parse_noise_law(noise_law)
    if n < 1:
        raise ConfigError(f'n: must be >= 1, got {n}')
    if n_features < 1:
        raise ConfigError(f'n_features: must be >= 1, got {n_features}')
    if scale < 0:
        raise ConfigError(f'scale: must be >= 0, got {scale}')
    rng = make_generator(seed)
    features = rng.uniform(*X_RANGE, size=(n, n_features))
    x = features[:, 0]
    eps = rng.standard_normal(n)
    mu = true_mean(x)
    sigma = noise_scale(x, law, scale)
    targets = mu + sigma * eps
    return Dataset(
        features=features,
        targets=targets,
        metadata={'mu': mu, 'sigma': sigma, 'neg_sigma': -sigma},
        ids=np.array([f's{i:06d}' for i in range(n)], dtype=object),
        feature_names=tuple(['x'] + [f'nuisance_{j}' for j in range(1, n_features)]),
        target_name='y')
