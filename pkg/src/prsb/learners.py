"""Base models trained on feature subsets: CART trees, kNN, and a constant fallback.

Every model records the binary feature subset it was trained on and
predicts from full-width feature rows by restricting to those columns.
Classification models predict class-probability vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _tree
from .data import CLASSIFICATION, Dataset

TREE = "tree"
KNN = "knn"
CONSTANT = "constant"
LEARNER_KINDS = (TREE, KNN)


@dataclass
class LearnerSpec:
    """What kind of base model to fit and its hyperparameters."""

    kind: str = TREE
    k_neighbors: int = 5
    max_depth: int | None = None
    min_samples_split: int = 2

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be None or >= 0")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")


@dataclass
class _TreePayload:
    feat: np.ndarray
    thr: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass
class _KnnPayload:
    points: np.ndarray  # (n_fit, n_cols) restricted training rows
    targets: np.ndarray
    sq_norms: np.ndarray
    k: int


@dataclass
class _ConstantPayload:
    value: np.ndarray  # shape () for regression, (C,) for classification


@dataclass
class TrainedModel:
    """A fitted base model restricted to one feature subset."""

    kind: str
    subset: np.ndarray  # (M,) uint8 mask over the full feature set
    columns: np.ndarray  # indices where subset == 1
    task_kind: str
    class_count: int | None
    payload: object
    trained_on: np.ndarray | None = None  # bootstrap row indices, None = all rows

    def predict(self, x: np.ndarray):
        """Predict one full-width feature row; scalar or (C,) probabilities."""
        out = self.predict_batch(np.asarray(x, dtype=np.float64)[None, :])
        return out[0] if self.task_kind == CLASSIFICATION else float(out[0])

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        if self.kind == CONSTANT:
            v = self.payload.value
            if v.ndim == 0:
                return np.full(n, float(v))
            return np.tile(v, (n, 1))
        Q = np.ascontiguousarray(X[:, self.columns])
        if self.kind == TREE:
            p = self.payload
            leaves = _tree.apply_tree(Q, p.feat, p.thr, p.left, p.right)
            return p.value[leaves]
        # kNN: squared Euclidean via the expansion |q|^2 - 2 q.x + |x|^2.
        p = self.payload
        d2 = (Q * Q).sum(axis=1)[:, None] - 2.0 * (Q @ p.points.T) + p.sq_norms[None, :]
        nbrs = _tree.knn_neighbors(d2, p.k)
        picked = p.targets[nbrs]
        if self.task_kind == CLASSIFICATION:
            onehot = np.eye(self.class_count)[picked.astype(np.int64)]
            return onehot.sum(axis=1) / p.k
        return picked.mean(axis=1)


@dataclass
class Ensemble:
    """T base models plus the subsets they were drawn with and the α snapshot."""

    models: list
    subsets: np.ndarray  # (T, M) uint8
    alpha: np.ndarray  # (M,) probabilities the subsets were sampled from

    def __len__(self) -> int:
        return len(self.models)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        """Unweighted ensemble mean prediction for each row of X."""
        preds = stack_predictions(self.models, X)
        return preds.mean(axis=0)


def stack_predictions(models, X: np.ndarray) -> np.ndarray:
    """Stack per-model predictions: (T, n) regression or (T, n, C) classification."""
    return np.stack([m.predict_batch(X) for m in models])


def _constant_model(subset, columns, y, task_kind, class_count, rows):
    if task_kind == CLASSIFICATION:
        counts = np.bincount(y, minlength=class_count).astype(np.float64)
        value = counts / counts.sum()
    else:
        value = np.asarray(float(np.mean(y)))
    return TrainedModel(CONSTANT, subset, columns, task_kind, class_count,
                        _ConstantPayload(value), rows)


def fit(spec: LearnerSpec, data: Dataset, subset: np.ndarray,
        bootstrap: np.ndarray | None = None) -> TrainedModel:
    """Fit one base model on ``data`` rows ``bootstrap`` using features where subset == 1.

    Degenerate inputs (empty subset) fall back to a constant model that
    predicts the training-target mean or class proportions.
    """
    subset = np.ascontiguousarray(subset, dtype=np.uint8)
    if subset.shape != (data.n_features,):
        raise ValueError(f"subset shape {subset.shape} does not match {data.n_features} features")
    columns = np.flatnonzero(subset)
    rows = None if bootstrap is None else np.asarray(bootstrap, dtype=np.intp)
    X = data.features if rows is None else data.features[rows]
    y = data.target if rows is None else data.target[rows]
    is_clf = data.task_kind == CLASSIFICATION

    if columns.size == 0:
        return _constant_model(subset, columns, y, data.task_kind, data.class_count, rows)

    Xs = np.ascontiguousarray(X[:, columns])
    if spec.kind == TREE:
        feat, thr, left, right, value = _tree.build_tree(
            Xs, y, is_clf, data.class_count or 0, spec.min_samples_split, spec.max_depth)
        payload = _TreePayload(feat, thr, left, right, value)
        return TrainedModel(TREE, subset, columns, data.task_kind, data.class_count, payload, rows)

    k = min(spec.k_neighbors, Xs.shape[0])
    payload = _KnnPayload(Xs, y.copy(), (Xs * Xs).sum(axis=1), k)
    return TrainedModel(KNN, subset, columns, data.task_kind, data.class_count, payload, rows)
