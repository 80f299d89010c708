import numpy as np
import pytest
from numpy.testing import assert_array_equal

from prsb.data import CLASSIFICATION, REGRESSION
from prsb.simdata import SimProblemSpec, generate, problem_spec


def test_canonical_shapes():
    expected = {
        "checkerboard": (304, 4, REGRESSION),
        "friedman": (305, 5, REGRESSION),
        "hypercube": (305, 5, CLASSIFICATION),
        "linear": (310, 10, CLASSIFICATION),
    }
    for kind, (m, m_rel, task) in expected.items():
        spec = problem_spec(kind, seed=0)
        train, test, relevant = generate(spec)
        assert train.n_features == m
        assert train.n_samples == 300
        assert test.n_samples == 500
        assert train.task_kind == task
        assert_array_equal(relevant, np.arange(m_rel))


def test_noncanonical_dims_rejected():
    with pytest.raises(ValueError):
        SimProblemSpec(kind="friedman", n_features=10, n_relevant=5)
    with pytest.raises(ValueError):
        SimProblemSpec(kind="checkerboard", n_features=304, n_relevant=2)


def test_deterministic_and_seed_sensitive():
    a_train, a_test, _ = generate(problem_spec("friedman", seed=7))
    b_train, b_test, _ = generate(problem_spec("friedman", seed=7))
    c_train, _, _ = generate(problem_spec("friedman", seed=8))
    assert_array_equal(a_train.features, b_train.features)
    assert_array_equal(a_train.target, b_train.target)
    assert_array_equal(a_test.features, b_test.features)
    assert not np.array_equal(a_train.features, c_train.features)


def test_train_test_from_same_pool():
    # targets of train and test should follow the same law; check via means
    train, test, _ = generate(problem_spec("friedman", seed=3))
    assert abs(train.target.mean() - test.target.mean()) < 2.0


class TestCheckerboard:
    def test_signal_plus_unit_noise(self):
        spec = problem_spec("checkerboard", seed=1, n_train=5000, n_test=10)
        train, _, _ = generate(spec)
        x = train.features
        signal = 2 * x[:, 0] * x[:, 1] + 2 * x[:, 2] * x[:, 3]
        resid = train.target - signal
        assert abs(resid.mean()) < 0.05
        assert abs(resid.std() - 1.0) < 0.05

    def test_toeplitz_correlation(self):
        spec = problem_spec("checkerboard", seed=2, n_train=20000, n_test=10)
        train, _, _ = generate(spec)
        x = train.features
        cols = x[:, [0, 1, 2, 5, 50]]
        c = np.corrcoef(cols.T)
        # corr(x_i, x_j) = 0.9^|i-j| for the sampled column indices
        idx = np.array([0, 1, 2, 5, 50])
        want = 0.9 ** np.abs(idx[:, None] - idx[None, :])
        assert np.max(np.abs(c - want)) < 0.05

    def test_marginals_standard_normal(self):
        spec = problem_spec("checkerboard", seed=3, n_train=20000, n_test=10)
        train, _, _ = generate(spec)
        assert abs(train.features[:, 17].std() - 1.0) < 0.05
        assert abs(train.features[:, 17].mean()) < 0.05


class TestFriedman:
    def test_feature_scale(self):
        spec = problem_spec("friedman", seed=4, n_train=10000, n_test=10)
        train, _, _ = generate(spec)
        sd = train.features.std(axis=0)
        want = 0.5 / 3
        assert np.all(np.abs(sd - want) < 0.15 * want)

    def test_target_formula(self):
        spec = problem_spec("friedman", seed=5, n_train=4000, n_test=10)
        train, _, _ = generate(spec)
        x = train.features
        signal = (
            10 * np.sin(np.pi * x[:, 0] * x[:, 1])
            + 20 * (x[:, 2] - 0.5) ** 2
            + 10 * x[:, 3]
            + 5 * x[:, 4]
        )
        resid = train.target - signal
        assert abs(resid.std() - 0.1) < 0.01
        assert abs(resid.mean()) < 0.01


class TestHypercube:
    def test_two_balanced_classes(self):
        train, test, _ = generate(problem_spec("hypercube", seed=6))
        assert train.task_kind == CLASSIFICATION
        assert train.class_count == 2
        y = np.concatenate([train.target, test.target])
        counts = np.bincount(y.astype(int), minlength=2)
        assert abs(counts[0] - counts[1]) <= 2

    def test_relevant_block_near_vertices(self):
        train, _, _ = generate(problem_spec("hypercube", seed=7))
        block = train.features[:, :5]
        # each relevant coordinate sits at ±1 plus unit noise, so its distance
        # from the nearest sign should look like a half-normal (mean √(2/π))
        dev = np.abs(block - np.sign(block))
        assert abs(np.mean(dev) - np.sqrt(2 / np.pi)) < 0.25

    def test_four_distinct_vertices(self):
        train, _, _ = generate(problem_spec("hypercube", seed=8, n_train=2000, n_test=10))
        block = train.features[:, :5]
        powers = 2 ** np.arange(5)
        codes = ((np.sign(block) > 0).astype(int) @ powers).astype(int)
        _, counts = np.unique(codes, return_counts=True)
        # with unit noise each coordinate keeps its sign w.p. Φ(1) ≈ 0.841, so a
        # row lands on its own vertex code w.p. 0.841^5 ≈ 0.42; the four true
        # vertex codes should clearly dominate the 28 spurious ones
        top4 = np.sort(counts)[-4:].sum()
        assert top4 > 0.35 * len(block)
        assert counts.max() < 0.6 * len(block)  # no single vertex swallows all

    def test_irrelevant_features_standard_normal(self):
        train, _, _ = generate(problem_spec("hypercube", seed=9, n_train=5000, n_test=10))
        tail = train.features[:, 5:]
        assert abs(tail.mean()) < 0.05
        assert abs(tail.std() - 1.0) < 0.05


class TestLinear:
    def test_classes_balanced_by_median(self):
        train, test, _ = generate(problem_spec("linear", seed=10))
        y = np.concatenate([train.target, test.target])
        counts = np.bincount(y.astype(int), minlength=2)
        assert counts[0] == counts[1] == 400

    def test_labels_consistent_with_a_linear_score(self):
        # a fresh logistic-style check: the class-1 mean score along the relevant
        # block must dominate the class-0 mean under *some* positive weighting;
        # with w ~ U(0, 100) every relevant coordinate contributes positively.
        train, _, _ = generate(problem_spec("linear", seed=11))
        pos = train.features[train.target == 1][:, :10].mean(axis=0)
        neg = train.features[train.target == 0][:, :10].mean(axis=0)
        assert pos.mean() > neg.mean()
