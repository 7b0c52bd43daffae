import math

import numpy as np
import pytest

from boosting import BoostingParams, regressor_factory, quantile_regressor_factory
from catalogue import make_dataset, kfold_indices, make_generator, synth_heteroscedastic, take, split
from catalogue.normalization import NormalizationState
from intervals import (IntervalConfig, Method, Aggregation, ScoreKind, naive, jackknife_plus_ab, cv_family, cqr,
                       calibrate, calibrate_naive, calibrate_cqr, calibrate_cv_family, point_prediction,
                       draw_bootstrap, denormalize_interval, interval_batch, empirical_quantile_hi,
                       empirical_quantile_lo, rowwise_quantile_hi, rowwise_quantile_lo, quantile_rank,
                       write_intervals_csv)
from interval_metrics import picp
from util.errors import ConfigError, DataError

from helpers import LeastSquares, least_squares_factory, shifted_quantile_factory, linear_data


def q_hi(values, alpha):
    values = sorted(values)
    k = math.ceil((1 - alpha) * (len(values) + 1) - 1e-9)
    return math.inf if k > len(values) else values[k - 1]


def q_lo(values, alpha):
    return -q_hi([-v for v in values], alpha)


def collapse(lower, upper, point):
    return (point, point) if lower > upper else (lower, upper)


class ConstantModel:
    def __init__(self, value=0.0):
        self.value = value

    def fit(self, features, targets):
        return self

    def predict(self, features):
        return np.full(len(features), self.value)


class Band:
    """quantile stand-in centred on zero with half-width 1 + 10 |x0|"""

    def __init__(self, tau):
        self.sign = 1.0 if tau > 0.5 else -1.0

    def fit(self, features, targets):
        return self

    def predict(self, features):
        return self.sign * (1.0 + 10.0 * np.abs(np.asarray(features)[:, 0]))


def random_case(rng, n_max=20):
    n = int(rng.integers(8, n_max + 1))
    train = linear_data(n, seed=int(rng.integers(1 << 30)))
    test_x = rng.uniform(-1.5, 1.5, size=(int(rng.integers(1, 7)), 2))
    alpha = float(rng.choice([0.05, 0.1, 0.2, 0.3, 0.5]))
    return train, test_x, alpha


class TestQuantiles:
    def test_examples(self):
        assert empirical_quantile_hi(np.arange(1, 11), 0.1) == 10
        assert empirical_quantile_hi([5.0], 0.5) == 5
        assert empirical_quantile_hi([1.0, 2.0, 3.0], 0.01) == math.inf

    def test_matches_enumeration(self):
        rng = np.random.default_rng(0)
        for n in range(1, 101):
            v = rng.normal(size=n)
            ordered = np.sort(v)
            for a in range(1, 100):
                k = -(-(100 - a) * (n + 1) // 100)
                expected = math.inf if k > n else ordered[k - 1]
                assert empirical_quantile_hi(v, a / 100) == expected, (n, a)

    def test_lower_is_mirrored(self):
        v = np.array([4.0, -1.0, 2.5, 7.0, 0.0])
        assert empirical_quantile_lo(v, 0.2) == -empirical_quantile_hi(-v, 0.2)
        assert empirical_quantile_lo([1.0, 2.0], 0.01) == -math.inf

    def test_rowwise(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(5, 12))
        np.testing.assert_array_equal(rowwise_quantile_hi(m, 0.2), [empirical_quantile_hi(r, 0.2) for r in m])

    def test_errors(self):
        with pytest.raises(DataError):
            empirical_quantile_hi([], 0.1)
        with pytest.raises(ConfigError):
            quantile_rank(10, 1.0)


class TestNaive:
    def test_constant_residual_example(self):
        train = make_dataset(np.zeros((10, 1)), np.arange(1.0, 11.0))
        batch = naive(train, np.zeros((3, 1)), ConstantModel(0.0), IntervalConfig(alpha=0.1, method=Method.NAIVE))
        np.testing.assert_array_equal(batch.lower, -10.0)
        np.testing.assert_array_equal(batch.upper, 10.0)

    def test_width_is_constant(self):
        train = linear_data(40, seed=3)
        model = LeastSquares().fit(train.features, train.targets)
        test_x = np.random.default_rng(0).uniform(size=(25, 2))
        batch = naive(train, test_x, model, IntervalConfig(method=Method.NAIVE))
        assert np.ptp(batch.width) == 0

    def test_perfect_interpolator_gives_zero_width(self):
        train = make_dataset(np.zeros((12, 1)), np.zeros(12))
        batch = naive(train, np.ones((4, 1)), ConstantModel(0.0), IntervalConfig(method=Method.NAIVE))
        np.testing.assert_array_equal(batch.width, 0.0)

    def test_matches_loop(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            train, test_x, alpha = random_case(rng)
            model = LeastSquares().fit(train.features, train.targets)
            batch = naive(train, test_x, model, IntervalConfig(alpha=alpha, method=Method.NAIVE))
            residuals = [abs(y - model.predict(x[None, :])[0]) for x, y in zip(train.features, train.targets)]
            q = q_hi(residuals, alpha)
            for j, x in enumerate(test_x):
                mu = model.predict(x[None, :])[0]
                assert batch.lower[j] == pytest.approx(mu - q, abs=1e-12)
                assert batch.upper[j] == pytest.approx(mu + q, abs=1e-12)

    def test_infinite_when_rank_overflows(self):
        train = linear_data(5, seed=1)
        model = LeastSquares().fit(train.features, train.targets)
        batch = naive(train, np.zeros((2, 2)), model, IntervalConfig(alpha=0.05, method=Method.NAIVE))
        assert batch.n_infinite == 2
        assert np.all(np.isneginf(batch.lower)) and np.all(np.isposinf(batch.upper))
        assert np.all(np.isfinite(batch.point))

    def test_empty_training_set(self):
        with pytest.raises(DataError):
            calibrate_naive(make_dataset(np.zeros((0, 1)), np.zeros(0)), ConstantModel())


class TestJackknifePlusAfterBootstrap:
    def oracle(self, train, test_x, alpha, cfg, aggregate):
        samples, _ = draw_bootstrap(train.n_samples, cfg.n_resamples, make_generator(cfg.seed))
        models = [LeastSquares().fit(train.features[s], train.targets[s]) for s in samples]
        lows, highs = [[] for _ in test_x], [[] for _ in test_x]
        for i in range(train.n_samples):
            keep = [m for m, s in zip(models, samples) if i not in set(s.tolist())]
            loo = aggregate([m.predict(train.features[i:i + 1])[0] for m in keep])
            r = abs(train.targets[i] - loo)
            for j, x in enumerate(test_x):
                c = aggregate([m.predict(x[None, :])[0] for m in keep])
                lows[j].append(c - r)
                highs[j].append(c + r)
        bounds = [collapse(q_lo(lo, alpha), q_hi(hi, alpha), np.mean([(a + b) / 2 for a, b in zip(lo, hi)]))
                  for lo, hi in zip(lows, highs)]
        return [b[0] for b in bounds], [b[1] for b in bounds]

    @pytest.mark.parametrize('aggregation', [Aggregation.MEAN, Aggregation.MEDIAN])
    def test_matches_loop(self, aggregation):
        rng = np.random.default_rng(3)
        aggregate = np.mean if aggregation == Aggregation.MEAN else np.median
        for case in range(100 if aggregation == Aggregation.MEAN else 20):
            train, test_x, alpha = random_case(rng)
            cfg = IntervalConfig(alpha=alpha, method=Method.JACKKNIFE_PLUS_AB, n_resamples=int(rng.integers(10, 14)),
                                 aggregation=aggregation, seed=case)
            batch = jackknife_plus_ab(train, test_x, least_squares_factory, cfg)
            lower, upper = self.oracle(train, test_x, alpha, cfg, aggregate)
            np.testing.assert_allclose(batch.lower, lower, rtol=0, atol=1e-12)
            np.testing.assert_allclose(batch.upper, upper, rtol=0, atol=1e-12)

    def test_every_sample_left_out_somewhere(self):
        samples, out_of_bag = draw_bootstrap(15, 10, make_generator(0))
        assert samples.shape == (10, 15)
        assert np.all(out_of_bag.any(axis=1))
        for k, s in enumerate(samples):
            assert set(np.flatnonzero(~out_of_bag[:, k]).tolist()) == set(s.tolist())

    def test_retry_budget(self):
        with pytest.raises(DataError):
            draw_bootstrap(1, 3, make_generator(0))

    def test_threads_do_not_change_result(self):
        train = linear_data(30, seed=4)
        test_x = np.zeros((3, 2))
        cfg = IntervalConfig(method=Method.JACKKNIFE_PLUS_AB, seed=1)
        a = jackknife_plus_ab(train, test_x, least_squares_factory, cfg)
        b = jackknife_plus_ab(train, test_x, least_squares_factory, cfg._replace(threads=3))
        np.testing.assert_array_equal(a.lower, b.lower)
        np.testing.assert_array_equal(a.upper, b.upper)

    def test_point_is_mean_of_leave_out_predictions(self):
        train = linear_data(20, seed=5)
        test_x = np.array([[0.2, -0.3]])
        calibration = calibrate(IntervalConfig(method=Method.JACKKNIFE_PLUS_AB, seed=2), train,
                                regressor_factory=least_squares_factory)
        prepared = calibration.prepare(test_x)
        assert prepared.point[0] == pytest.approx(prepared.centers[0].mean())
        assert calibration.scores.kind == ScoreKind.ABSOLUTE_RESIDUAL


class TestCrossValidation:
    def oracle(self, method, train, test_x, alpha, k, seed):
        folds = kfold_indices(train.n_samples, k, seed)
        fold_of = {}
        models = []
        for f, held in enumerate(folds):
            keep = np.setdiff1d(np.arange(train.n_samples), held)
            models.append(LeastSquares().fit(train.features[keep], train.targets[keep]))
            for i in held:
                fold_of[int(i)] = f
        r = [abs(train.targets[i] - models[fold_of[i]].predict(train.features[i:i + 1])[0])
             for i in range(train.n_samples)]
        lower, upper = [], []
        for x in test_x:
            preds = [m.predict(x[None, :])[0] for m in models]
            if method == Method.CV:
                mu = LeastSquares().fit(train.features, train.targets).predict(x[None, :])[0]
                lower.append(mu - q_hi(r, alpha))
                upper.append(mu + q_hi(r, alpha))
            elif method == Method.CV_PLUS:
                centers = [preds[fold_of[i]] for i in range(train.n_samples)]
                a, b = collapse(q_lo([c - ri for c, ri in zip(centers, r)], alpha),
                                q_hi([c + ri for c, ri in zip(centers, r)], alpha), np.mean(centers))
                lower.append(a)
                upper.append(b)
            else:
                lower.append(min(preds) - q_hi(r, alpha))
                upper.append(max(preds) + q_hi(r, alpha))
        return lower, upper

    @pytest.mark.parametrize('method', [Method.CV, Method.CV_PLUS, Method.CV_MINMAX])
    def test_matches_loop(self, method):
        rng = np.random.default_rng(6)
        for case in range(100):
            train, test_x, alpha = random_case(rng)
            k = int(rng.integers(2, 6))
            cfg = IntervalConfig(alpha=alpha, method=method, n_resamples=k, seed=case)
            batch = cv_family(train, test_x, least_squares_factory, cfg)
            lower, upper = self.oracle(method, train, test_x, alpha, k, case)
            np.testing.assert_allclose(batch.lower, lower, rtol=0, atol=1e-12)
            np.testing.assert_allclose(batch.upper, upper, rtol=0, atol=1e-12)

    def test_minmax_contains_cv_plus(self):
        params = BoostingParams(n_estimators=20, max_depth=2, max_leaf_nodes=4)
        for seed in range(20):
            d = synth_heteroscedastic(120, seed=seed)
            train, test = take(d, np.arange(100)), take(d, np.arange(100, 120))
            base = IntervalConfig(alpha=0.1, n_resamples=5, seed=seed)
            calibration = calibrate_cv_family(train, regressor_factory(params), base._replace(method=Method.CV_PLUS))
            plus = calibration.prepare(test.features).at(0.1)
            minmax = calibration._replace(method=Method.CV_MINMAX).prepare(test.features).at(0.1)
            assert np.all(minmax.lower <= plus.lower)
            assert np.all(minmax.upper >= plus.upper)

    def test_plain_cv_width_is_constant(self):
        train = linear_data(40, seed=7)
        batch = cv_family(train, np.random.default_rng(0).uniform(size=(25, 2)), least_squares_factory,
                          IntervalConfig(method=Method.CV, n_resamples=5))
        assert np.ptp(batch.width) == 0

    def test_prefitted_full_model_is_used(self):
        train = linear_data(30, seed=8)
        full = ConstantModel(42.0)
        batch = cv_family(train, np.zeros((2, 2)), least_squares_factory,
                          IntervalConfig(method=Method.CV, n_resamples=3), full_model=full)
        np.testing.assert_array_equal(batch.point, 42.0)

    def test_more_folds_than_samples(self):
        with pytest.raises(DataError):
            cv_family(linear_data(4), np.zeros((1, 2)), least_squares_factory,
                      IntervalConfig(method=Method.CV_PLUS, n_resamples=5))

    def test_single_fold_is_rejected(self):
        with pytest.raises(ConfigError):
            cv_family(linear_data(10), np.zeros((1, 2)), least_squares_factory,
                      IntervalConfig(method=Method.CV_PLUS, n_resamples=1))

    def test_not_a_cv_method(self):
        with pytest.raises(ConfigError):
            calibrate_cv_family(linear_data(10), least_squares_factory, IntervalConfig(method=Method.NAIVE))


class TestCQR:
    def test_matches_loop(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            train, test_x, alpha = random_case(rng)
            calibration = linear_data(int(rng.integers(5, 20)), seed=int(rng.integers(1 << 30)))
            width = float(rng.uniform(0.1, 2.0))
            factory = shifted_quantile_factory(width)
            batch = cqr(train, calibration, test_x, factory, IntervalConfig(alpha=alpha, method=Method.CQR))
            lo = factory(alpha / 2).fit(train.features, train.targets)
            hi = factory(1 - alpha / 2).fit(train.features, train.targets)
            e = [max(lo.predict(x[None, :])[0] - y, y - hi.predict(x[None, :])[0])
                 for x, y in zip(calibration.features, calibration.targets)]
            q = q_hi(e, alpha)
            for j, x in enumerate(test_x):
                a, b = lo.predict(x[None, :])[0] - q, hi.predict(x[None, :])[0] + q
                if a > b:
                    a = b = (lo.predict(x[None, :])[0] + hi.predict(x[None, :])[0]) / 2
                assert batch.lower[j] == pytest.approx(a, abs=1e-12)
                assert batch.upper[j] == pytest.approx(b, abs=1e-12)

    def test_scores_may_be_negative(self):
        train = linear_data(20, seed=1, noise=0.01)
        calibration = linear_data(20, seed=2, noise=0.01)
        result = calibrate_cqr(train, calibration, shifted_quantile_factory(1.0), IntervalConfig())
        assert result.scores.kind == ScoreKind.CQR_SIGNED
        assert np.all(result.scores.scores < 0)

    def test_crossed_quantiles_are_swapped(self):
        train, calibration = linear_data(20, seed=1), linear_data(15, seed=2)
        test_x = np.random.default_rng(0).uniform(size=(5, 2))
        cfg = IntervalConfig(alpha=0.2)
        crossed = cqr(train, calibration, test_x, shifted_quantile_factory(-1.0), cfg)
        ordered = cqr(train, calibration, test_x, shifted_quantile_factory(1.0), cfg)
        np.testing.assert_array_equal(crossed.lower, ordered.lower)
        np.testing.assert_array_equal(crossed.upper, ordered.upper)

    def test_over_tight_interval_collapses_to_point(self):
        x_cal = np.column_stack([np.linspace(0.5, 1.0, 10), np.zeros(10)])
        calibration = make_dataset(x_cal, np.zeros(10))
        train = make_dataset(x_cal, np.zeros(10))
        batch = cqr(train, calibration, np.array([[0.0, 0.0], [1.0, 0.0]]), Band, IntervalConfig(alpha=0.1))
        assert batch.lower[0] == batch.upper[0] == 0.0
        assert batch.lower[1] == -5.0 and batch.upper[1] == 5.0

    def test_point_is_midpoint(self):
        train, calibration = linear_data(20, seed=3), linear_data(10, seed=4)
        test_x = np.zeros((2, 2))
        batch = cqr(train, calibration, test_x, shifted_quantile_factory(0.5), IntervalConfig())
        model = LeastSquares().fit(train.features, train.targets)
        np.testing.assert_allclose(batch.point, model.predict(test_x), atol=1e-12)

    def test_empty_calibration(self):
        with pytest.raises(DataError):
            cqr(linear_data(10), make_dataset(np.zeros((0, 2)), np.zeros(0)), np.zeros((1, 2)),
                shifted_quantile_factory(), IntervalConfig())


class TestSharedBehaviour:
    @pytest.mark.parametrize('method', list(Method))
    def test_bounds_move_inward_as_alpha_grows(self, method):
        train, calibration = linear_data(60, seed=10), linear_data(40, seed=11)
        test_x = np.random.default_rng(1).uniform(-1, 1, size=(30, 2))
        cfg = IntervalConfig(alpha=0.1, method=method, n_resamples=10, seed=3)
        prepared = calibrate(cfg, train, calibration=calibration, regressor_factory=least_squares_factory,
                             quantile_regressor_factory=shifted_quantile_factory(0.3)).prepare(test_x)
        previous = None
        for alpha in np.arange(0.05, 0.96, 0.05):
            batch = prepared.at(float(alpha))
            assert np.all(batch.lower <= batch.upper)
            assert np.all(batch.width >= 0)
            if previous is not None:
                assert np.all(batch.width <= previous.width)
                # rows collapsed to the point are exempt from nesting
                open_rows = batch.upper > batch.lower
                assert np.all(batch.lower[open_rows] >= previous.lower[open_rows])
                assert np.all(batch.upper[open_rows] <= previous.upper[open_rows])
            previous = batch

    @pytest.mark.parametrize('method', [Method.CV_PLUS, Method.JACKKNIFE_PLUS_AB])
    def test_crossed_order_statistics_collapse_to_point(self, method):
        train = linear_data(60, seed=10)
        test_x = np.random.default_rng(1).uniform(-1, 1, size=(30, 2))
        cfg = IntervalConfig(method=method, n_resamples=10, seed=3)
        prepared = calibrate(cfg, train, regressor_factory=least_squares_factory).prepare(test_x)
        lower = rowwise_quantile_lo(prepared.centers - prepared.scores.scores[None, :], 0.95)
        upper = rowwise_quantile_hi(prepared.centers + prepared.scores.scores[None, :], 0.95)
        crossed = lower > upper
        batch = prepared.at(0.95)
        np.testing.assert_array_equal(batch.lower[crossed], batch.point[crossed])
        np.testing.assert_array_equal(batch.upper[crossed], batch.point[crossed])
        np.testing.assert_array_equal(batch.lower[~crossed], lower[~crossed])
        assert np.all(batch.lower <= batch.upper)

    @pytest.mark.parametrize('cfg', [IntervalConfig(alpha=0.0), IntervalConfig(alpha=1.0),
                                     IntervalConfig(method=Method.JACKKNIFE_PLUS_AB, n_resamples=1)])
    def test_invalid_config(self, cfg):
        with pytest.raises(ConfigError):
            calibrate(cfg, linear_data(20), calibration=linear_data(10), regressor_factory=least_squares_factory,
                      quantile_regressor_factory=shifted_quantile_factory())

    def test_missing_factory(self):
        with pytest.raises(ConfigError):
            calibrate(IntervalConfig(method=Method.CQR), linear_data(20), calibration=linear_data(10))

    def test_point_prediction_rules(self):
        assert point_prediction(Method.NAIVE, [1.0, 2.0]).tolist() == [1.0, 2.0]
        assert point_prediction(Method.CQR, ([0.0, 2.0], [2.0, 4.0])).tolist() == [1.0, 3.0]
        assert point_prediction(Method.CV_PLUS, [[1.0, 3.0], [2.0, 2.0]]).tolist() == [2.0, 2.0]

    def test_denormalize(self):
        batch = interval_batch([0.5, 0.5], [0.25, -np.inf], [0.75, np.inf], alpha=0.1)
        state = NormalizationState(np.zeros(1), np.ones(1), 7.0, 9.0)
        out = denormalize_interval(batch, state)
        assert out.point.tolist() == [8.0, 8.0]
        assert out.lower.tolist() == [7.5, -np.inf]
        assert out.upper.tolist() == [8.5, np.inf]
        assert out.size == 2 and out.alpha == 0.1

    def test_target_unit_widths_stay_constant(self):
        d = synth_heteroscedastic(700, seed=0)
        d = d._replace(targets=d.targets + 8.0)
        train, test = take(d, np.arange(600)), take(d, np.arange(600, 700))
        model = LeastSquares().fit(train.features, train.targets)
        batch = naive(train, test.features, model, IntervalConfig(method=Method.NAIVE))
        state = NormalizationState(np.zeros(1), np.ones(1), 8.3, 11.9)
        out = denormalize_interval(batch, state)
        assert np.ptp(out.width) == 0
        assert out.width[0] == batch.width[0] * state.target_range

    def test_replace_keeps_fields(self):
        batch = interval_batch(np.zeros(3), -np.ones(3), np.ones(3))
        assert batch._replace(alpha=0.2).alpha == 0.2

    def test_interval_batch_checks_order(self):
        with pytest.raises(DataError):
            interval_batch([0.0], [1.0], [0.0])

    def test_export(self, tmp_path):
        batch = interval_batch([0.5, 1.0], [0.0, -np.inf], [1.0, np.inf], alpha=0.1, method=Method.NAIVE)
        path = tmp_path / 'iv.csv'
        write_intervals_csv(str(path), batch, ['a', 'b'])
        lines = path.read_text().splitlines()
        assert lines[0] == 'id,point,lower,upper,alpha,method'
        assert lines[1] == 'a,0.5,0.0,1.0,0.1,naive'
        assert lines[2] == 'b,1.0,-inf,inf,0.1,naive'
        with pytest.raises(DataError):
            write_intervals_csv(str(path), batch, ['a'])


def coverage_run(seed, method, n_train, n_cal, n_test, params):
    d = synth_heteroscedastic(n_train + n_cal + n_test, seed=seed, noise_law='constant')
    train = take(d, np.arange(n_train))
    calibration = take(d, np.arange(n_train, n_train + n_cal))
    test = take(d, np.arange(n_train + n_cal, d.n_samples))
    cfg = IntervalConfig(alpha=0.1, method=method, n_resamples=10, seed=seed)
    full = regressor_factory(params)().fit(train.features, train.targets)
    prepared = calibrate(cfg, train, calibration=calibration, regressor_factory=regressor_factory(params),
                         quantile_regressor_factory=quantile_regressor_factory(params),
                         fitted_regressor=full).prepare(test.features)
    return picp(test.targets, prepared.at(0.1))


COVERAGE_FLOOR = {Method.CQR: 0.89, Method.CV: 0.89, Method.CV_MINMAX: 0.89,
                  Method.CV_PLUS: 0.79, Method.JACKKNIFE_PLUS_AB: 0.79}


class TestCoverage:
    @pytest.mark.parametrize('method', list(COVERAGE_FLOOR))
    def test_reduced_coverage(self, method):
        params = BoostingParams(n_estimators=20, max_depth=2, max_leaf_nodes=4)
        mean = np.mean([coverage_run(seed, method, 300, 200, 500, params) for seed in range(5)])
        assert mean >= COVERAGE_FLOOR[method] - 0.03

    @pytest.mark.slow
    @pytest.mark.parametrize('method', list(COVERAGE_FLOOR))
    def test_coverage_over_50_seeds(self, method):
        params = BoostingParams(n_estimators=30, max_depth=2, max_leaf_nodes=4)
        mean = np.mean([coverage_run(seed, method, 2000, 1000, 5000, params) for seed in range(50)])
        assert mean >= COVERAGE_FLOOR[method]

    def test_split_sizes_feed_cqr(self):
        d = synth_heteroscedastic(200, seed=0)
        s = split(d.n_samples, seed=0)
        batch = cqr(take(d, s.train), take(d, s.calibration), take(d, s.test).features,
                    quantile_regressor_factory(BoostingParams(n_estimators=10, max_depth=2)), IntervalConfig())
        assert batch.size == len(s.test)
