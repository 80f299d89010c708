"""Losses and the score-function gradient of the ensemble objective.

The gradient of the objective with respect to the selection probability
of feature j is the minibatch average of

    dL/dprediction * (f_{j,1} - f_{j,0})

where f_{j,1} and f_{j,0} are the expected model outputs conditioned on
feature j being in or out of the subset. Both are estimated from the
current ensemble by importance sampling with leave-one-out weights, or
computed exactly in the exhaustive enumeration mode used for tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CLASSIFICATION, REGRESSION, Dataset
from .learners import Ensemble, stack_predictions
from .sampling import (
    ImportanceState,
    WeightCollapseError,
    _check_probs,
    weight_matrices,
)

MSE = "mse"
CROSS_ENTROPY = "cross_entropy"
LOSS_KINDS = (MSE, CROSS_ENTROPY)


@dataclass
class LossSpec:
    """Loss kind plus the probability clamp used before logarithms."""

    kind: str = MSE
    clamp_eps: float = 1e-12

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if not 0 < self.clamp_eps < 1:
            raise ValueError("clamp_eps must be in (0, 1)")

    def task_kind(self) -> str:
        return REGRESSION if self.kind == MSE else CLASSIFICATION


def default_loss(task_kind: str) -> LossSpec:
    return LossSpec(MSE) if task_kind == REGRESSION else LossSpec(CROSS_ENTROPY)


def check_loss_task(loss: LossSpec, task_kind: str):
    if loss.task_kind() != task_kind:
        raise ValueError(f"loss {loss.kind!r} does not apply to {task_kind} targets")


def loss_and_dloss(loss: LossSpec, y, prediction):
    """Pointwise loss and its derivative with respect to the prediction.

    MSE: (y - p)^2 with derivative -2(y - p). Cross-entropy: -log p_y on
    the clamped probability, derivative -1/p_y at the true class and 0
    elsewhere.
    """
    if loss.kind == MSE:
        r = float(y) - float(prediction)
        return r * r, -2.0 * r
    p = np.asarray(prediction, dtype=np.float64)
    c = int(y)
    if not 0 <= c < p.size:
        raise ValueError(f"class {c} out of range for {p.size} classes")
    py = max(float(p[c]), loss.clamp_eps)
    d = np.zeros_like(p)
    d[c] = -1.0 / py
    return -float(np.log(py)), d


def _loss_batch(loss: LossSpec, y, P):
    """Vectorized losses/derivatives: P is (n,) regression or (n, C) probabilities."""
    if loss.kind == MSE:
        r = np.asarray(y, dtype=np.float64) - P
        return r * r, -2.0 * r
    n = P.shape[0]
    idx = np.asarray(y, dtype=np.int64)
    py = np.maximum(P[np.arange(n), idx], loss.clamp_eps)
    dL = np.zeros_like(P)
    dL[np.arange(n), idx] = -1.0 / py
    return -np.log(py), dL


def _is_mean(P, w, clamp_eps):
    """Importance-sampled ensemble mean, 1/T normalized as written in the estimator.

    Classification vectors are renormalized to sum 1, then clamped.
    """
    t = w.size
    if P.ndim == 2:  # regression (T, n)
        return (w @ P) / t
    v = np.tensordot(w, P, axes=(0, 0)) / t  # (n, C)
    s = v.sum(axis=1)
    if np.any(s <= 0.0):
        raise WeightCollapseError("ensemble probability mass vanished under the weights")
    v = v / s[:, None]
    return np.maximum(v, clamp_eps)


@dataclass
class GradientEstimate:
    """Per-feature partials with the prediction and model counts behind them."""

    partials: np.ndarray  # (M,)
    predictions: np.ndarray  # ensemble predictions on the minibatch
    t_j0: np.ndarray  # (M,) model counts with feature j absent
    t_j1: np.ndarray  # (M,) model counts with feature j present
    mean_loss: float
    retrain_hint: bool  # some feature had no models on one side


def gradient_from_predictions(P, subsets, w, loo, y, loss: LossSpec) -> GradientEstimate:
    """Gradient core on a precomputed prediction stack.

    P: (T, n) or (T, n, C) base-model predictions on the minibatch rows;
    subsets: (T, M); w, loo: importance weights and their leave-one-out
    matrix for the same rows.
    """
    Z = np.asarray(subsets, dtype=np.float64)
    t, m = Z.shape
    n = P.shape[1]
    t1 = np.count_nonzero(subsets, axis=0).astype(np.int64)
    t0 = t - t1

    pred = _is_mean(P, w, loss.clamp_eps)
    L, dL = _loss_batch(loss, y, pred)

    ZW1 = (Z * loo).T  # (M, T)
    ZW0 = ((1.0 - Z) * loo).T
    flat = P.reshape(t, -1)  # (T, n) or (T, n*C)
    s1 = ZW1 @ flat
    s0 = ZW0 @ flat
    safe1 = np.maximum(t1, 1).astype(np.float64)
    safe0 = np.maximum(t0, 1).astype(np.float64)
    f1 = s1 / safe1[:, None]
    f0 = s0 / safe0[:, None]
    diff = (f1 - f0).reshape((m,) + P.shape[1:])

    if P.ndim == 2:
        partials = diff @ dL / n
    else:
        partials = np.einsum("mnc,nc->m", diff, dL) / n

    undefined = (t0 == 0) | (t1 == 0)
    hint = bool(np.any(undefined))
    if hint:
        partials = np.where(undefined, 0.0, partials)
    return GradientEstimate(partials, pred, t0, t1, float(L.mean()), hint)


def ensemble_predict_is(models: Ensemble, state: ImportanceState, beta, x):
    """Weighted ensemble prediction for one sample under new parameters ``beta``."""
    w, _ = weight_matrices(state.subsets, state.alpha_snapshot, beta)
    P = np.stack([mod.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0]
                  for mod in models.models])
    if P.ndim == 1:
        return float((w @ P) / w.size)
    out = _is_mean(P[:, None, :], w, 1e-12)
    return out[0]


def conditional_means(models: Ensemble, state: ImportanceState, beta, x, j: int):
    """Expected model output with feature j excluded / included: (f_{j,0}, f_{j,1}).

    A side with no models returns None for that entry.
    """
    _, loo = weight_matrices(state.subsets, state.alpha_snapshot, beta)
    P = np.stack([mod.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0]
                  for mod in models.models])
    zj = state.subsets[:, j] == 1
    wj = loo[:, j]
    out = []
    for mask in (~zj, zj):
        cnt = int(mask.sum())
        if cnt == 0:
            out.append(None)
            continue
        if P.ndim == 1:
            out.append(float((wj[mask] @ P[mask]) / cnt))
        else:
            out.append(np.tensordot(wj[mask], P[mask], axes=(0, 0)) / cnt)
    return out[0], out[1]


def estimate_gradient(models: Ensemble, state: ImportanceState, beta,
                      minibatch: Dataset, loss: LossSpec) -> GradientEstimate:
    """Score-function gradient of the minibatch objective at ``beta``."""
    if minibatch.n_samples == 0:
        raise ValueError("minibatch must be nonempty")
    check_loss_task(loss, minibatch.task_kind)
    b = _check_probs(beta)
    w, loo = weight_matrices(state.subsets, state.alpha_snapshot, b)
    P = stack_predictions(models.models, minibatch.features)
    return gradient_from_predictions(P, state.subsets, w, loo, minibatch.target, loss)


# ---------------------------------------------------------------------------
# Exact-expectation mode: exhaustive enumeration over all 2^M subsets.
# Only feasible for small M; used to validate the estimators.

def enumerate_subsets(m: int) -> np.ndarray:
    """All 2^m subset masks; row i holds the binary digits of i (bit j = feature j)."""
    if not 1 <= m <= 20:
        raise ValueError("enumeration supports 1 <= M <= 20")
    codes = np.arange(2 ** m, dtype=np.int64)
    return ((codes[:, None] >> np.arange(m)) & 1).astype(np.uint8)


def _pmf_all(subsets, alpha):
    a = _check_probs(alpha)
    factors = np.where(subsets == 1, a, 1.0 - a)
    return np.prod(factors, axis=1)


def _table_width(table) -> int:
    m = int(round(np.log2(table.shape[0])))
    if 2 ** m != table.shape[0]:
        raise ValueError(f"table must have 2^M rows, got {table.shape[0]}")
    return m


def exact_prediction(table, alpha) -> np.ndarray:
    """Exact expected ensemble output: sum_z p(z|alpha) f_z.

    ``table`` maps subset rows (in enumerate_subsets order) to predictions:
    (2^M, n) for regression or (2^M, n, C) for classification.
    """
    pz = _pmf_all(enumerate_subsets(_table_width(table)), alpha)
    return np.tensordot(pz, np.asarray(table, dtype=np.float64), axes=(0, 0))


def exact_conditional_means(table, alpha, j: int):
    """Exact (f_{j,0}, f_{j,1}): expectations over p(z_{-j} | alpha_{-j})."""
    Z = enumerate_subsets(_table_width(table))
    a = _check_probs(alpha)
    factors = np.where(Z == 1, a, 1.0 - a)
    factors[:, j] = 1.0
    p_wo = np.prod(factors, axis=1)
    tbl = np.asarray(table, dtype=np.float64)
    mask1 = Z[:, j] == 1
    f0 = np.tensordot(p_wo[~mask1], tbl[~mask1], axes=(0, 0))
    f1 = np.tensordot(p_wo[mask1], tbl[mask1], axes=(0, 0))
    return f0, f1


def exact_objective(table, alpha, y, loss: LossSpec) -> float:
    """Mean loss of the exact expected prediction over the sample set."""
    pred = exact_prediction(table, alpha)
    if loss.kind == CROSS_ENTROPY:
        s = pred.sum(axis=1)
        pred = np.maximum(pred / s[:, None], loss.clamp_eps)
    L, _ = _loss_batch(loss, y, pred)
    return float(L.mean())


def exact_gradient(table, alpha, y, loss: LossSpec) -> np.ndarray:
    """Analytic gradient of exact_objective via the conditional-mean identity."""
    a = _check_probs(alpha)
    pred = exact_prediction(table, a)
    if loss.kind == CROSS_ENTROPY:
        s = pred.sum(axis=1)
        pred = np.maximum(pred / s[:, None], loss.clamp_eps)
    _, dL = _loss_batch(loss, y, pred)
    n = pred.shape[0]
    out = np.empty(a.size)
    for j in range(a.size):
        f0, f1 = exact_conditional_means(table, a, j)
        diff = f1 - f0
        if diff.ndim == 1:
            out[j] = float(diff @ dL) / n
        else:
            out[j] = float((diff * dL).sum()) / n
    return out
