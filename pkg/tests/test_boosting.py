import numpy as np
import pytest

from boosting import (BoostingParams, Loss, fit, predict, staged_predict, pinball_loss, BoostedRegressor,
                      regressor_factory, quantile_regressor_factory, SearchSpace, sample_configurations,
                      evaluate_cv, random_search_cv, dump_model, restore_model, save_model, load_model,
                      GBRTModel)
from boosting.trees import grow_tree, apply_tree, LEAF
from interval_metrics import mae, rmse
from util.errors import ConfigError, DataError


def mean_leaf(g):
    return lambda idx: float(np.mean(g[idx]))


class TestPinballLoss:
    def test_half_mae_at_median(self):
        rng = np.random.default_rng(0)
        y, pred = rng.normal(size=200), rng.normal(size=200)
        assert pinball_loss(y, pred, 0.5) == mae(y, pred) / 2

    def test_perfect_fit(self):
        y = np.array([1.0, 2.0, 3.0])
        assert pinball_loss(y, y, 0.3) == 0.0

    def test_hand_example(self):
        assert pinball_loss([0.0, 10.0], [5.0, 5.0], 0.9) == pytest.approx(2.5)

    def test_tau_outside_unit_interval(self):
        with pytest.raises(ConfigError):
            pinball_loss([1.0], [1.0], 1.0)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            pinball_loss([1.0, 2.0], [1.0], 0.5)


class TestTrees:
    def test_split_goes_to_the_midpoint(self):
        x = np.array([[0.0], [1.0], [2.0], [3.0]])
        g = np.array([0.0, 0.0, 1.0, 1.0])
        tree, leaves = grow_tree(x, g, mean_leaf(g), max_depth=1, max_leaf_nodes=None)
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 1.5
        assert tree.leaf_count == 2
        np.testing.assert_array_equal(apply_tree(tree, x), leaves)

    def test_ties_go_to_lowest_feature(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        g = np.array([0.0, 0.0, 1.0, 1.0])
        tree, _ = grow_tree(x, g, mean_leaf(g), max_depth=1, max_leaf_nodes=None)
        assert tree.feature[0] == 0

    def test_depth_zero_is_a_single_leaf(self):
        x = np.arange(10.0)[:, None]
        g = np.arange(10.0)
        tree, _ = grow_tree(x, g, mean_leaf(g), max_depth=0, max_leaf_nodes=None)
        assert tree.node_count == 1 and tree.feature[0] == LEAF
        assert tree.value[0] == 4.5

    def test_leaf_bound(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(size=(200, 3))
        g = rng.normal(size=200)
        tree, _ = grow_tree(x, g, mean_leaf(g), max_depth=None, max_leaf_nodes=7)
        assert tree.leaf_count == 7

    def test_depth_bound(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=(200, 3))
        g = rng.normal(size=200)
        tree, _ = grow_tree(x, g, mean_leaf(g), max_depth=3, max_leaf_nodes=None)
        assert tree.depth() <= 3
        assert tree.leaf_count <= 8

    def test_constant_gradient_is_not_split(self):
        x = np.arange(5.0)[:, None]
        g = np.ones(5)
        tree, _ = grow_tree(x, g, mean_leaf(g), max_depth=None, max_leaf_nodes=None)
        assert tree.node_count == 1


class TestFit:
    def test_single_leaf_predicts_mean(self):
        rng = np.random.default_rng(0)
        x, y = rng.uniform(size=(30, 2)), rng.normal(size=30)
        model = fit(x, y, BoostingParams(n_estimators=1, learning_rate=0.7, max_depth=0))
        np.testing.assert_allclose(predict(model, x), np.mean(y))

    def test_no_trees_predicts_base_value(self):
        model = GBRTModel(base_value=2.5, trees=(), params=BoostingParams(), n_features=2)
        np.testing.assert_array_equal(predict(model, np.zeros((4, 2))), 2.5)

    def test_memorises_distinct_rows(self):
        rng = np.random.default_rng(3)
        x, y = rng.uniform(size=(40, 2)), rng.normal(size=40)
        model = fit(x, y, BoostingParams(n_estimators=1, learning_rate=1.0, max_depth=None, max_leaf_nodes=None))
        np.testing.assert_allclose(predict(model, x), y, atol=1e-12)

    def test_pinball_stumps_reach_empirical_quantile(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=1000)
        x = rng.uniform(size=(1000, 1))
        model = fit(x, y, BoostingParams(loss=Loss.PINBALL, tau=0.9, n_estimators=500, max_depth=0))
        expected = np.sort(y)[int(np.ceil(0.9 * 1000)) - 1]
        assert abs(predict(model, x[:1])[0] - expected) <= 0.01

    def test_quantile_models_bracket_the_data(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-3, 3, size=(600, 1))
        y = np.sin(x[:, 0]) + 0.3 * rng.standard_normal(600)
        params = BoostingParams(n_estimators=80, max_depth=3, max_leaf_nodes=8)
        lo = quantile_regressor_factory(params)(0.1).fit(x, y)
        hi = quantile_regressor_factory(params)(0.9).fit(x, y)
        below = np.mean(y < lo.predict(x))
        above = np.mean(y > hi.predict(x))
        assert 0.03 < below < 0.2
        assert 0.03 < above < 0.2

    def test_staged_predict_ends_at_predict(self):
        rng = np.random.default_rng(6)
        x, y = rng.uniform(size=(50, 3)), rng.normal(size=50)
        model = fit(x, y, BoostingParams(n_estimators=5))
        stages = list(staged_predict(model, x))
        assert len(stages) == 5
        np.testing.assert_allclose(stages[-1], predict(model, x))

    def test_squared_error_training_loss_never_rises(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(size=(120, 3))
        y = np.sin(4 * x[:, 0]) + x[:, 1] + 0.2 * rng.standard_normal(120)
        model = fit(x, y, BoostingParams(n_estimators=40, learning_rate=0.3))
        losses = [np.mean((y - model.base_value) ** 2)] + [np.mean((y - p) ** 2) for p in staged_predict(model, x)]
        for before, after in zip(losses, losses[1:]):
            assert after <= before * (1 + 1e-12)
        assert losses[-1] < losses[0]

    def test_refit_grows_identical_trees(self):
        rng = np.random.default_rng(9)
        x, y = rng.uniform(size=(80, 4)), rng.normal(size=80)
        params = BoostingParams(n_estimators=15, max_depth=4, max_leaf_nodes=9)
        a, b = fit(x, y, params), fit(x, y, params)
        assert a.base_value == b.base_value and len(a.trees) == len(b.trees)
        for s, t in zip(a.trees, b.trees):
            for field in s._fields:
                np.testing.assert_array_equal(getattr(s, field), getattr(t, field))

    def test_row_order_invariance(self):
        rng = np.random.default_rng(7)
        x, y = rng.uniform(size=(50, 3)), rng.normal(size=50)
        model = fit(x, y, BoostingParams(n_estimators=10))
        perm = rng.permutation(50)
        np.testing.assert_array_equal(predict(model, x[perm]), predict(model, x)[perm])

    def test_wrong_width(self):
        model = fit(np.zeros((4, 2)) + np.arange(4)[:, None], np.arange(4.0), BoostingParams(n_estimators=1))
        with pytest.raises(DataError):
            predict(model, np.zeros((2, 3)))

    @pytest.mark.parametrize('params', [BoostingParams(learning_rate=0), BoostingParams(n_estimators=0),
                                        BoostingParams(max_leaf_nodes=1), BoostingParams(max_depth=-1),
                                        BoostingParams(loss=Loss.PINBALL, tau=0.0)])
    def test_invalid_params(self, params):
        with pytest.raises(ConfigError):
            fit(np.zeros((3, 1)), np.zeros(3), params)

    def test_regressor_adapter(self):
        rng = np.random.default_rng(8)
        x, y = rng.uniform(size=(30, 2)), rng.normal(size=30)
        params = BoostingParams(n_estimators=3)
        reg = regressor_factory(params)().fit(x, y)
        assert isinstance(reg, BoostedRegressor)
        np.testing.assert_array_equal(reg.predict(x), predict(fit(x, y, params), x))
        with pytest.raises(DataError):
            BoostedRegressor(params).predict(x)


class TestSerialization:
    def test_restored_model_predicts_identically(self, tmp_path):
        rng = np.random.default_rng(9)
        x, y = rng.uniform(size=(80, 3)), rng.normal(size=80)
        model = fit(x, y, BoostingParams(n_estimators=6, max_depth=4, loss=Loss.PINBALL, tau=0.2))
        path = str(tmp_path / 'model.json')
        save_model(path, model)
        restored = load_model(path)
        assert restored.params == model.params
        np.testing.assert_array_equal(predict(restored, x), predict(model, x))

    def test_rejects_foreign_dump(self):
        with pytest.raises(DataError):
            restore_model({'format': 'something-else'})

    def test_truncated_dump(self):
        model = fit(np.arange(8.0)[:, None], np.arange(8.0), BoostingParams(n_estimators=1, max_depth=2))
        dump = dump_model(model)
        dump['trees'][0] = dump['trees'][0][:-1]
        with pytest.raises(DataError):
            restore_model(dump)


class TestSearch:
    def test_sampled_ranges(self):
        space = SearchSpace(learning_rate=(0.0, 1.0), max_depth=(2, 3), max_leaf_nodes=(2, 4), n_estimators=(10, 12))
        configurations = sample_configurations(space, 200, seed=1)
        assert all(0 < c.learning_rate < 1 for c in configurations)
        assert {c.max_depth for c in configurations} == {2, 3}
        assert {c.n_estimators for c in configurations} == {10, 11, 12}

    def test_cv_of_a_perfect_predictor(self):
        x = np.arange(20.0)[:, None]
        y = np.full(20, 3.0)
        score = evaluate_cv(x, y, BoostingParams(n_estimators=2), folds=5)
        assert score.mae == (0.0,) * 5
        assert score.rmse_mean == 0.0

    def test_cv_of_a_constant_predictor(self):
        # depth-0 trees never move off the training mean
        x = np.arange(4.0)[:, None]
        y = np.array([0.0, 1.0, 0.0, 1.0])
        score = evaluate_cv(x, y, BoostingParams(n_estimators=1, max_depth=0), folds=2, seed=0)
        assert len(score.mae) == 2
        assert all(0 <= m <= 1 for m in score.mae)
        assert score.rmse_mean >= score.mae_mean

    def test_single_iteration(self):
        rng = np.random.default_rng(10)
        x, y = rng.uniform(size=(40, 2)), rng.normal(size=40)
        space = SearchSpace(n_estimators=(5, 10), max_depth=(2, 4))
        result = random_search_cv(x, y, space, folds=4, iters=1, seed=3)
        assert result.params == sample_configurations(space, 1, seed=3)[0]

    def test_collapsed_space(self):
        rng = np.random.default_rng(11)
        x, y = rng.uniform(size=(40, 2)), rng.normal(size=40)
        space = SearchSpace(learning_rate=(0.2, 0.2), max_depth=(3, 3), max_leaf_nodes=(5, 5), n_estimators=(7, 7))
        result = random_search_cv(x, y, space, folds=4, iters=3, seed=0)
        expected = BoostingParams(learning_rate=0.2, max_depth=3, max_leaf_nodes=5, n_estimators=7, seed=0)
        assert result.params == expected
        assert result.score == evaluate_cv(x, y, expected, folds=4, seed=0)

    def test_best_of_the_sampled_configurations(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(-2, 2, size=(60, 1))
        y = x[:, 0] ** 2 + 0.1 * rng.standard_normal(60)
        space = SearchSpace(n_estimators=(5, 30), max_depth=(1, 4), max_leaf_nodes=(2, 8))
        result = random_search_cv(x, y, space, folds=3, iters=6, seed=2)
        losses = [evaluate_cv(x, y, p, folds=3, seed=2).loss_mean for p in sample_configurations(space, 6, seed=2)]
        assert result.score.loss_mean == min(losses)
        assert len(result.history) == 6

    def test_threads_do_not_change_scores(self):
        rng = np.random.default_rng(13)
        x, y = rng.uniform(size=(50, 2)), rng.normal(size=50)
        params = BoostingParams(n_estimators=5)
        assert evaluate_cv(x, y, params, folds=5, threads=1) == evaluate_cv(x, y, params, folds=5, threads=3)

    def test_rmse_bounds_mae_on_every_fold(self):
        rng = np.random.default_rng(14)
        x = rng.uniform(size=(90, 2))
        y = x[:, 0] + rng.standard_t(3, size=90)
        score = evaluate_cv(x, y, BoostingParams(n_estimators=8), folds=6, seed=1)
        assert len(score.mae) == len(score.rmse) == 6
        for m, r in zip(score.mae, score.rmse):
            assert r >= m

    def test_too_few_samples(self):
        with pytest.raises(DataError):
            evaluate_cv(np.zeros((3, 1)), np.zeros(3), BoostingParams(), folds=5)
