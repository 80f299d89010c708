"""Evaluation metrics: feature ranking, AUPR, and test error."""

from __future__ import annotations

import numpy as np

from .data import CLASSIFICATION, REGRESSION, TASK_KINDS


def rank_features(alpha) -> np.ndarray:
    """Indices sorted by decreasing importance; ties broken by ascending index."""
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("alpha must be a non-empty 1-D vector")
    return np.argsort(-a, kind="stable")


def aupr(ranking, relevant, n_items: int | None = None) -> float:
    """Average precision of a ranking against the relevant set.

    Precision is evaluated at each relevant hit and averaged over the
    relevant count, so a perfect ranking scores 1 and a random one scores
    about the prevalence of relevant items. Items may be feature indices
    or any hashable (e.g. edge pairs).
    """
    items = list(ranking)
    rel = set(relevant)
    if not rel:
        raise ValueError("relevant set must be nonempty")
    if n_items is not None and len(items) > n_items:
        raise ValueError(f"ranking has {len(items)} items, expected at most {n_items}")
    if len(set(items)) != len(items):
        raise ValueError("ranking contains duplicates")
    hits = 0
    total = 0.0
    for pos, item in enumerate(items, start=1):
        if item in rel:
            hits += 1
            total += hits / pos
    return total / len(rel)


def test_error(predictions, targets, task_kind: str) -> float:
    """MSE for regression; misclassification rate for classification.

    Classification predictions may be class-probability rows (argmax with
    ties to the lowest class index) or already-hard labels.
    """
    if task_kind not in TASK_KINDS:
        raise ValueError(f"unknown task_kind {task_kind!r}")
    p = np.asarray(predictions)
    t = np.asarray(targets)
    if task_kind == REGRESSION:
        if p.shape != t.shape:
            raise ValueError("prediction/target shapes differ")
        return float(((p - t.astype(np.float64)) ** 2).mean())
    labels = p.argmax(axis=1) if p.ndim == 2 else p.astype(np.int64)
    if labels.shape != t.shape:
        raise ValueError("prediction/target shapes differ")
    return float((labels != t).mean())
