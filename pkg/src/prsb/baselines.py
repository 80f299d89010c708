"""Reference methods: random subspace + bagging, UMDA feature ranking, single models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CLASSIFICATION, Dataset
from .learners import Ensemble, LearnerSpec, TrainedModel, fit
from .metrics import test_error
from .sampling import sample_subsets


def default_k_grid(m: int) -> list[int]:
    """Candidate subset sizes: fractions of M plus sqrt(M), floored and clamped."""
    raw = [1, m / 100, m / 50, m / 20, m / 10, m / 5, m / 3, m / 2, np.sqrt(m), m]
    vals = {min(max(int(v), 1), m) for v in raw}
    return sorted(vals)


@dataclass
class RsbConfig:
    T: int = 100
    k_grid: list | None = None  # None = default_k_grid(M)
    cv_folds: int = 10

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")


@dataclass
class RsbResult:
    ensemble: Ensemble
    chosen_k: int
    cv_errors: dict  # K -> pooled CV error


@dataclass
class EdaConfig:
    T: int = 100
    B: int = 50
    alpha_init: float = 0.05
    restarts: int = 20
    eval_folds: int = 10
    max_iterations: int = 100

    def __post_init__(self):
        if not 1 <= self.B <= self.T:
            raise ValueError("need 1 <= B <= T")
        if not 0 < self.alpha_init <= 1:
            raise ValueError("alpha_init must be in (0, 1]")
        if self.restarts < 1 or self.eval_folds < 2 or self.max_iterations < 1:
            raise ValueError("invalid EDA configuration")


@dataclass
class EdaReport:
    best_restart: int
    stop_iterations: list  # per restart
    final_population_errors: list  # per restart, mean error of last population
    elite_mean_errors: list = field(default_factory=list)  # winning restart, per iteration
    population_mean_errors: list = field(default_factory=list)


def single_train(data: Dataset, learner: LearnerSpec) -> TrainedModel:
    """One model on every feature and every row (no bootstrap, no subspace)."""
    return fit(learner, data, np.ones(data.n_features, dtype=np.uint8))


def _fold_assignment(data: Dataset, n_folds: int, g) -> np.ndarray:
    """Fold index per sample; classification folds are stratified by class."""
    n = data.n_samples
    folds = np.empty(n, dtype=np.int64)
    if data.task_kind == CLASSIFICATION:
        for c in range(data.class_count):
            idx = np.flatnonzero(data.target == c)
            idx = g.permutation(idx)
            folds[idx] = np.arange(idx.size) % n_folds
    else:
        folds[g.permutation(n)] = np.arange(n) % n_folds
    return folds


def _uniform_subsets(m: int, k: int, count: int, g) -> np.ndarray:
    Z = np.zeros((count, m), dtype=np.uint8)
    for t in range(count):
        Z[t, g.choice(m, size=k, replace=False)] = 1
    return Z


def _fit_rsb_ensemble(data: Dataset, learner: LearnerSpec, t_models: int, k: int,
                      rows: np.ndarray, g) -> list:
    models = []
    Z = _uniform_subsets(data.n_features, k, t_models, g)
    boots = g.integers(0, rows.size, size=(t_models, rows.size))
    for t in range(t_models):
        models.append(fit(learner, data, Z[t], rows[boots[t]]))
    return models, Z


def rsb_train(data: Dataset, learner: LearnerSpec, cfg: RsbConfig, g) -> RsbResult:
    """Random-subspace bagging with the subset size K tuned by cross-validation.

    Ties in CV error go to the smaller K. The returned ensemble is retrained
    on the full dataset at the chosen K.
    """
    m = data.n_features
    grid = cfg.k_grid if cfg.k_grid is not None else default_k_grid(m)
    grid = sorted({int(k) for k in grid})
    if not grid or grid[0] < 1 or grid[-1] > m:
        raise ValueError(f"K grid must lie in [1, {m}]")

    n_folds = min(cfg.cv_folds, data.n_samples)
    folds = _fold_assignment(data, n_folds, g)
    cv_errors = {}
    best_k = None
    for k in grid:
        if data.task_kind == CLASSIFICATION:
            pooled = np.empty((data.n_samples, data.class_count))
        else:
            pooled = np.empty(data.n_samples)
        for f in range(n_folds):
            held = folds == f
            rows = np.flatnonzero(~held)
            models, _ = _fit_rsb_ensemble(data, learner, cfg.T, k, rows, g)
            pooled[held] = np.mean(
                [mod.predict_batch(data.features[held]) for mod in models], axis=0)
        cv_errors[k] = test_error(pooled, data.target, data.task_kind)
        if best_k is None or cv_errors[k] < cv_errors[best_k]:
            best_k = k

    rows = np.arange(data.n_samples)
    models, Z = _fit_rsb_ensemble(data, learner, cfg.T, best_k, rows, g)
    alpha = np.full(m, best_k / m)  # marginal inclusion probability of a K-subset
    return RsbResult(Ensemble(models, Z, alpha), best_k, cv_errors)


def _mean_pairwise_hamming(Z: np.ndarray) -> float:
    """Exact mean Hamming distance over all unordered subset pairs."""
    t = Z.shape[0]
    if t < 2:
        return 0.0
    ones = Z.sum(axis=0, dtype=np.int64)
    differing = (ones * (t - ones)).sum()
    return float(differing / (t * (t - 1) / 2))


def _cv_subset_error(data: Dataset, learner: LearnerSpec, subset, folds, n_folds) -> float:
    """Pooled CV error of a single model trained on one feature subset."""
    if data.task_kind == CLASSIFICATION:
        pooled = np.empty((data.n_samples, data.class_count))
    else:
        pooled = np.empty(data.n_samples)
    for f in range(n_folds):
        held = folds == f
        model = fit(learner, data, subset, np.flatnonzero(~held))
        pooled[held] = model.predict_batch(data.features[held])
    return test_error(pooled, data.target, data.task_kind)


def eda_rank(data: Dataset, learner: LearnerSpec, cfg: EdaConfig, g):
    """Univariate marginal distribution algorithm over feature subsets.

    Each generation samples T subsets from the Bernoulli marginals, scores
    them by single-model CV error, and refits the marginals to the elite B.
    A restart stops once the population's mean pairwise Hamming distance
    falls below half its initial value (or to zero), or at the iteration
    cap. The restart whose final population has the lowest mean error wins.

    Returns (alpha, EdaReport).
    """
    m = data.n_features
    best = None
    stop_iterations = []
    final_errors = []
    traces = []
    alphas = []
    for restart in range(cfg.restarts):
        folds = _fold_assignment(data, min(cfg.eval_folds, data.n_samples), g)
        n_folds = int(folds.max()) + 1
        alpha = np.full(m, cfg.alpha_init)
        d_init = None
        elite_trace = []
        pop_trace = []
        scores = np.zeros(cfg.T)
        stop_at = cfg.max_iterations
        for it in range(cfg.max_iterations):
            Z = sample_subsets(alpha, cfg.T, g)
            scores = np.array([_cv_subset_error(data, learner, Z[t], folds, n_folds)
                               for t in range(cfg.T)])
            elite = np.argsort(scores, kind="stable")[: cfg.B]
            alpha = Z[elite].mean(axis=0)
            elite_trace.append(float(scores[elite].mean()))
            pop_trace.append(float(scores.mean()))
            d = _mean_pairwise_hamming(Z)
            if d_init is None:
                d_init = d
            if d == 0.0 or d < d_init / 2.0:
                stop_at = it + 1
                break
        stop_iterations.append(stop_at)
        final_errors.append(float(scores.mean()))
        traces.append((elite_trace, pop_trace))
        alphas.append(alpha)
        if best is None or final_errors[-1] < final_errors[best]:
            best = restart

    elite_trace, pop_trace = traces[best]
    report = EdaReport(best, stop_iterations, final_errors, elite_trace, pop_trace)
    return alphas[best], report
