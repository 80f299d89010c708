"""Random-subspace bagging and the UMDA-style subset search."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from prsb import rng
from prsb.baselines import (
    EdaConfig,
    RsbConfig,
    _fold_assignment,
    _mean_pairwise_hamming,
    default_k_grid,
    eda_rank,
    rsb_train,
    single_train,
)
from prsb.data import CLASSIFICATION, REGRESSION, Dataset
from prsb.learners import LearnerSpec


def _toy_regression(n=60, m=6, seed=0):
    g = rng.stream(seed, "toyreg")
    x = g.normal(size=(n, m))
    y = 3.0 * x[:, 0] + 0.01 * g.normal(size=n)
    return Dataset(x, y, REGRESSION)


def _toy_classification(n=60, m=5, seed=0):
    g = rng.stream(seed, "toyclf")
    x = g.normal(size=(n, m))
    y = (x[:, 0] > 0).astype(np.int64)
    return Dataset(x, y, CLASSIFICATION, class_count=2)


class TestKGrid:
    def test_reference_grid_at_305(self):
        assert default_k_grid(305) == [1, 3, 6, 15, 17, 30, 61, 101, 152, 305]

    def test_small_m_collapses_duplicates(self):
        grid = default_k_grid(4)
        assert grid == sorted(set(grid))
        assert grid[0] == 1 and grid[-1] == 4

    def test_grid_always_valid(self):
        for m in [1, 2, 3, 7, 10, 99, 304, 310, 1000]:
            grid = default_k_grid(m)
            assert grid[0] >= 1 and grid[-1] <= m
            assert grid == sorted(set(grid))
            assert m in grid and 1 in grid


class TestFolds:
    def test_partition_covers_everything(self):
        data = _toy_regression(n=53)
        folds = _fold_assignment(data, 10, rng.stream(0, "f"))
        assert folds.shape == (53,)
        sizes = np.bincount(folds, minlength=10)
        assert sizes.sum() == 53
        assert sizes.max() - sizes.min() <= 1

    def test_stratified_for_classification(self):
        data = _toy_classification(n=80)
        folds = _fold_assignment(data, 8, rng.stream(1, "f"))
        for c in range(2):
            per_fold = np.bincount(folds[data.target == c], minlength=8)
            assert per_fold.max() - per_fold.min() <= 1


class TestSingle:
    def test_uses_all_features_and_rows(self):
        data = _toy_regression()
        model = single_train(data, LearnerSpec(kind="tree"))
        assert_array_equal(model.subset, np.ones(data.n_features))
        # a fully grown tree memorizes its training rows
        pred = model.predict_batch(data.features)
        np.testing.assert_allclose(pred, data.target, atol=1e-12)


class TestRsb:
    def test_k_equal_m_is_bagging(self):
        data = _toy_regression(n=40, m=4)
        cfg = RsbConfig(T=10, k_grid=[4], cv_folds=4)
        res = rsb_train(data, LearnerSpec(kind="tree"), cfg, rng.stream(2, "rsb"))
        assert res.chosen_k == 4
        for model in res.ensemble.models:
            assert_array_equal(model.subset, np.ones(4))

    def test_tie_prefers_smaller_k(self):
        # constant target: every K gives identical (zero) CV error
        g = rng.stream(3, "tie")
        x = g.normal(size=(30, 5))
        data = Dataset(x, np.zeros(30), REGRESSION)
        cfg = RsbConfig(T=5, k_grid=[1, 2, 5], cv_folds=3)
        res = rsb_train(data, LearnerSpec(kind="tree"), cfg, g)
        assert res.chosen_k == 1
        assert set(res.cv_errors) == {1, 2, 5}

    def test_alpha_reflects_chosen_k(self):
        data = _toy_regression(n=40, m=8)
        cfg = RsbConfig(T=8, k_grid=[2], cv_folds=4)
        res = rsb_train(data, LearnerSpec(kind="knn", k_neighbors=3), cfg,
                        rng.stream(4, "rsba"))
        assert_array_equal(res.ensemble.alpha, np.full(8, 2 / 8))
        assert res.ensemble.subsets.sum(axis=1).tolist() == [2] * 8

    def test_prefers_informative_k_on_sparse_signal(self):
        # only 1 of 12 features matters; K=12 dilutes each tree less than K=1
        # starves it, so CV should not pick the full-feature bagging blindly —
        # here the signal is strong enough that small K wins on average.
        data = _toy_regression(n=80, m=12, seed=5)
        cfg = RsbConfig(T=30, k_grid=[1, 12], cv_folds=5)
        res = rsb_train(data, LearnerSpec(kind="knn", k_neighbors=5), cfg,
                        rng.stream(5, "rsbk"))
        assert res.cv_errors[1] != res.cv_errors[12]

    def test_deterministic_given_generator_seed(self):
        data = _toy_regression(n=30, m=4)
        cfg = RsbConfig(T=6, k_grid=[1, 2], cv_folds=3)
        r1 = rsb_train(data, LearnerSpec(kind="tree"), cfg, rng.stream(6, "det"))
        r2 = rsb_train(data, LearnerSpec(kind="tree"), cfg, rng.stream(6, "det"))
        assert r1.chosen_k == r2.chosen_k
        assert r1.cv_errors == r2.cv_errors
        assert_array_equal(r1.ensemble.subsets, r2.ensemble.subsets)


class TestHamming:
    def test_two_point_example(self):
        Z = np.array([[0, 0], [1, 1]], dtype=np.int8)
        assert _mean_pairwise_hamming(Z) == 2.0

    def test_identical_population_is_zero(self):
        Z = np.ones((7, 4), dtype=np.int8)
        assert _mean_pairwise_hamming(Z) == 0.0

    def test_matches_bruteforce(self):
        g = rng.stream(7, "ham")
        Z = (g.random((9, 6)) < 0.4).astype(np.int8)
        brute = np.mean([
            np.abs(Z[i] - Z[j]).sum()
            for i in range(9) for j in range(i + 1, 9)
        ])
        assert _mean_pairwise_hamming(Z) == pytest.approx(brute)

    def test_single_subset(self):
        assert _mean_pairwise_hamming(np.ones((1, 3), dtype=np.int8)) == 0.0


class TestEda:
    def test_alpha_entries_are_elite_frequencies(self):
        data = _toy_regression(n=36, m=4)
        cfg = EdaConfig(T=12, B=4, restarts=1, eval_folds=3, max_iterations=3)
        alpha, report = eda_rank(data, LearnerSpec(kind="knn", k_neighbors=3), cfg,
                                 rng.stream(8, "eda"))
        assert alpha.shape == (4,)
        # every coordinate is a count out of B
        np.testing.assert_allclose(alpha * cfg.B, np.round(alpha * cfg.B), atol=1e-12)

    def test_elite_mean_no_worse_than_population(self):
        data = _toy_regression(n=36, m=5, seed=1)
        cfg = EdaConfig(T=10, B=3, restarts=1, eval_folds=3, max_iterations=4)
        _, report = eda_rank(data, LearnerSpec(kind="knn", k_neighbors=3), cfg,
                             rng.stream(9, "eda2"))
        for e, p in zip(report.elite_mean_errors, report.population_mean_errors):
            assert e <= p + 1e-12

    def test_degenerate_population_stops_immediately(self):
        data = _toy_regression(n=24, m=3)
        # alpha_init=1 makes every sampled subset the full set: Hamming 0
        cfg = EdaConfig(T=6, B=2, alpha_init=1.0, restarts=2, eval_folds=3,
                        max_iterations=50)
        _, report = eda_rank(data, LearnerSpec(kind="knn", k_neighbors=3), cfg,
                             rng.stream(10, "eda3"))
        assert report.stop_iterations == [1, 1]

    def test_concentrates_on_predictive_feature(self):
        data = _toy_regression(n=50, m=6, seed=2)
        cfg = EdaConfig(T=20, B=5, restarts=2, eval_folds=5, max_iterations=15)
        alpha, report = eda_rank(data, LearnerSpec(kind="knn", k_neighbors=3), cfg,
                                 rng.stream(11, "eda4"))
        assert alpha[0] == max(alpha)
        assert alpha[0] >= 0.8
        assert report.best_restart in (0, 1)

    def test_restart_winner_has_lowest_final_error(self):
        data = _toy_classification(n=40, m=4, seed=3)
        cfg = EdaConfig(T=8, B=3, restarts=3, eval_folds=4, max_iterations=3)
        _, report = eda_rank(data, LearnerSpec(kind="knn", k_neighbors=3), cfg,
                             rng.stream(12, "eda5"))
        errs = report.final_population_errors
        assert errs[report.best_restart] == min(errs)
