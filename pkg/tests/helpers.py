import numpy as np

from catalogue import make_dataset


class LeastSquares:
    """ordinary least squares with intercept; deterministic and fast enough for oracle checks"""

    def __init__(self):
        self.coef = None

    def fit(self, features, targets):
        x = np.column_stack([np.ones(len(features)), np.asarray(features, dtype=np.float64)])
        self.coef = np.linalg.lstsq(x, np.asarray(targets, dtype=np.float64), rcond=None)[0]
        return self

    def predict(self, features):
        features = np.asarray(features, dtype=np.float64)
        return self.coef[0] + features @ self.coef[1:]


class ShiftedLeastSquares(LeastSquares):
    """least squares moved by a fixed offset, a stand-in quantile regressor"""

    def __init__(self, offset):
        super().__init__()
        self.offset = offset

    def predict(self, features):
        return super().predict(features) + self.offset


def least_squares_factory():
    return LeastSquares()


def shifted_quantile_factory(width=1.0):
    # tau < 0.5 below the fit, tau > 0.5 above it
    return lambda tau: ShiftedLeastSquares((tau - 0.5) * 2 * width)


def linear_data(n, seed=0, noise=0.5, n_features=2):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, n_features))
    y = x @ np.arange(1, n_features + 1) + noise * rng.standard_normal(n)
    return make_dataset(x, y)
