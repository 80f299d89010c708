import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from prsb import rng
from prsb.data import CLASSIFICATION, REGRESSION, Dataset
from prsb.gradient import (
    CROSS_ENTROPY,
    MSE,
    LossSpec,
    conditional_means,
    ensemble_predict_is,
    enumerate_subsets,
    estimate_gradient,
    exact_conditional_means,
    exact_gradient,
    exact_objective,
    exact_prediction,
    gradient_from_predictions,
    loss_and_dloss,
)
from prsb.learners import Ensemble, LearnerSpec, fit
from prsb.sampling import ImportanceState, sample_subsets


def _mse():
    return LossSpec(MSE)


def _ce():
    return LossSpec(CROSS_ENTROPY)


class TestLoss:
    def test_mse_values(self):
        assert loss_and_dloss(_mse(), 1.0, 1.0) == (0.0, -0.0)
        L, d = loss_and_dloss(_mse(), 0.0, 2.0)
        assert (L, d) == (4.0, 4.0)

    def test_cross_entropy_values(self):
        L, d = loss_and_dloss(_ce(), 0, np.array([0.5, 0.5]))
        assert L == pytest.approx(np.log(2.0))
        assert_allclose(d, [-2.0, 0.0])

    def test_cross_entropy_clamps_zero(self):
        L, d = loss_and_dloss(_ce(), 1, np.array([1.0, 0.0]))
        assert L == pytest.approx(-np.log(1e-12))
        assert d[1] == pytest.approx(-1e12)

    def test_validation(self):
        with pytest.raises(ValueError):
            LossSpec("hinge")
        with pytest.raises(ValueError):
            loss_and_dloss(_ce(), 5, np.array([0.5, 0.5]))


def _toy_state(subsets, alpha):
    return ImportanceState.at_retrain(alpha, subsets)


def _constant_ensemble(values, subsets, task="regression", class_count=None):
    """Models that always predict a fixed value, keyed to given subsets."""
    models = []
    for v, z in zip(values, subsets):
        n_feat = len(z)
        X = np.zeros((2, n_feat))
        if task == "regression":
            data = Dataset(X, [float(v), float(v)], REGRESSION)
        else:
            data = Dataset(X, [int(v), int(v)], CLASSIFICATION, class_count=class_count)
        models.append(fit(LearnerSpec(kind="knn", k_neighbors=2), data,
                          np.zeros(n_feat, dtype=np.uint8)))
        models[-1].subset = np.asarray(z, dtype=np.uint8)
    return Ensemble(models, np.asarray(subsets, dtype=np.uint8), None)


class TestEnsemblePredictIs:
    def test_plain_average_at_alpha(self):
        subsets = np.array([[1], [0]], dtype=np.uint8)
        alpha = np.array([0.5])
        ens = _constant_ensemble([1.0, 3.0], subsets)
        state = _toy_state(subsets, alpha)
        assert ensemble_predict_is(ens, state, alpha, np.zeros(1)) == pytest.approx(2.0)

    def test_single_model_scales_by_weight(self):
        subsets = np.array([[1]], dtype=np.uint8)
        alpha = np.array([0.5])
        beta = np.array([0.25])
        ens = _constant_ensemble([4.0], subsets)
        state = _toy_state(subsets, alpha)
        # w = 0.25/0.5; unnormalized estimate is w * 4
        assert ensemble_predict_is(ens, state, beta, np.zeros(1)) == pytest.approx(2.0)


class TestConditionalMeans:
    def test_one_model_each_side(self):
        subsets = np.array([[1], [0]], dtype=np.uint8)
        alpha = np.array([0.5])
        ens = _constant_ensemble([2.0, 4.0], subsets)
        state = _toy_state(subsets, alpha)
        f0, f1 = conditional_means(ens, state, alpha, np.zeros(1), 0)
        assert (f0, f1) == (4.0, 2.0)

    def test_undefined_side_is_none(self):
        subsets = np.array([[1], [1]], dtype=np.uint8)
        alpha = np.array([0.9])
        ens = _constant_ensemble([2.0, 4.0], subsets)
        state = _toy_state(subsets, alpha)
        f0, f1 = conditional_means(ens, state, alpha, np.zeros(1), 0)
        assert f0 is None
        assert f1 == pytest.approx(3.0)


class TestGradientFromPredictions:
    def test_identical_constants_zero_gradient(self):
        g = rng.stream(0, "zg")
        alpha = np.full(4, 0.5)
        Z = sample_subsets(alpha, 32, g)
        P = np.full((32, 6), 1.7)  # every model predicts 1.7 everywhere
        w = np.ones(32)
        loo = np.ones((32, 4))
        est = gradient_from_predictions(P, Z, w, loo, np.zeros(6), _mse())
        assert_allclose(est.partials, 0.0, atol=1e-12)
        assert_array_equal(est.t_j0 + est.t_j1, np.full(4, 32))

    def test_sign_of_harmful_feature(self):
        # models with feature 0 predict 10 (bad), those without predict 0 (= target)
        subsets = np.array([[1], [1], [0], [0]], dtype=np.uint8)
        P = np.array([[10.0], [10.0], [0.0], [0.0]])
        est = gradient_from_predictions(P, subsets, np.ones(4), np.ones((4, 1)),
                                        np.zeros(1), _mse())
        assert est.partials[0] > 0  # descent pushes alpha_0 down

    def test_undefined_side_zeroes_partial_and_hints(self):
        subsets = np.array([[1, 1], [1, 0]], dtype=np.uint8)
        P = np.array([[1.0], [2.0]])
        est = gradient_from_predictions(P, subsets, np.ones(2), np.ones((2, 2)),
                                        np.array([5.0]), _mse())
        assert est.partials[0] == 0.0  # no model lacks feature 0
        assert est.retrain_hint
        assert est.partials[1] != 0.0

    def test_model_order_invariance(self):
        g = rng.stream(1, "perm")
        alpha = np.full(5, 0.4)
        Z = sample_subsets(alpha, 40, g)
        P = g.normal(size=(40, 7))
        y = g.normal(size=7)
        w = np.ones(40)
        loo = np.ones((40, 5))
        est = gradient_from_predictions(P, Z, w, loo, y, _mse())
        perm = g.permutation(40)
        est2 = gradient_from_predictions(P[perm], Z[perm], w[perm], loo[perm], y, _mse())
        assert_allclose(est.partials, est2.partials, rtol=1e-12)


class TestExactMode:
    def test_enumerate_subsets_bits(self):
        Z = enumerate_subsets(3)
        assert Z.shape == (8, 3)
        assert_array_equal(Z[0], [0, 0, 0])
        assert_array_equal(Z[5], [1, 0, 1])  # 5 = binary 101
        assert len(np.unique(Z @ np.array([1, 2, 4]))) == 8

    def test_exact_prediction_small_case(self):
        # M=1: table rows for z=(0,) and z=(1,)
        table = np.array([[2.0], [6.0]])
        assert exact_prediction(table, np.array([0.25]))[0] == pytest.approx(3.0)

    def test_exact_conditionals_average_out(self):
        g = rng.stream(2, "ex")
        m = 5
        table = g.normal(size=(2 ** m, 4))
        alpha = 0.1 + 0.8 * g.random(m)
        pred = exact_prediction(table, alpha)
        for j in range(m):
            f0, f1 = exact_conditional_means(table, alpha, j)
            # law of total expectation: prediction = (1-a_j) f0 + a_j f1
            assert_allclose((1 - alpha[j]) * f0 + alpha[j] * f1, pred, rtol=1e-10)

    def _fd_check(self, loss, table, y, alpha, h=1e-5, tol=1e-6):
        grad = exact_gradient(table, alpha, y, loss)
        fd = np.zeros_like(alpha)
        for j in range(alpha.size):
            up = alpha.copy()
            dn = alpha.copy()
            up[j] += h
            dn[j] -= h
            fd[j] = (exact_objective(table, up, y, loss)
                     - exact_objective(table, dn, y, loss)) / (2 * h)
        rel = np.abs(grad - fd).max() / max(np.abs(fd).max(), 1e-12)
        assert rel < tol

    def test_gradient_matches_finite_differences_mse(self):
        g = rng.stream(3, "fd")
        for _ in range(5):
            m = 6
            table = g.normal(size=(2 ** m, 5))
            y = g.normal(size=5)
            alpha = 0.2 + 0.6 * g.random(m)
            self._fd_check(_mse(), table, y, alpha)

    def test_gradient_matches_finite_differences_cross_entropy(self):
        g = rng.stream(4, "fdce")
        m = 5
        raw = g.random(size=(2 ** m, 4, 3)) + 0.2
        table = raw / raw.sum(axis=2, keepdims=True)
        y = g.integers(0, 3, size=4)
        alpha = 0.2 + 0.6 * g.random(m)
        self._fd_check(_ce(), table, y, alpha)


class TestEstimateGradientIntegration:
    def test_counts_and_finiteness_with_real_learners(self):
        g = rng.stream(5, "int")
        X = g.normal(size=(40, 4))
        y = X[:, 0] - X[:, 2] + 0.1 * g.normal(size=40)
        data = Dataset(X, y, REGRESSION)
        alpha = np.full(4, 0.5)
        Z = sample_subsets(alpha, 30, g)
        models = [fit(LearnerSpec(kind="tree"), data, z) for z in Z]
        ens = Ensemble(models, Z, alpha)
        state = _toy_state(Z, alpha)
        est = estimate_gradient(ens, state, alpha, data.take(np.arange(10)), _mse())
        assert est.partials.shape == (4,)
        assert np.all(np.isfinite(est.partials))
        assert_array_equal(est.t_j0 + est.t_j1, np.full(4, 30))
        assert est.mean_loss > 0

    def test_loss_task_mismatch_rejected(self):
        g = rng.stream(6, "mis")
        X = g.normal(size=(10, 2))
        data = Dataset(X, (X[:, 0] > 0).astype(int), CLASSIFICATION)
        alpha = np.full(2, 0.5)
        Z = sample_subsets(alpha, 4, g)
        models = [fit(LearnerSpec(kind="knn"), data, z) for z in Z]
        ens = Ensemble(models, Z, alpha)
        with pytest.raises(ValueError):
            estimate_gradient(ens, _toy_state(Z, alpha), alpha, data, _mse())
