"""Independent-Bernoulli feature-subset distribution.

Sampling, PMF and leave-one-out PMF, importance-weight ratios between two
parameter vectors, and effective sample size of a weight vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Linear-space products switch to log space past this magnitude.
_OVERFLOW_GUARD = 1e12


class DegenerateRatioError(ValueError):
    """A sampled bit has zero probability under the sampling parameters."""


class WeightCollapseError(RuntimeError):
    """All importance weights are zero; the ensemble must be retrained."""


def _check_probs(alpha):
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("selection probabilities must be a non-empty 1-D vector")
    if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("selection probabilities must lie in [0, 1]")
    return a


def sample_subset(alpha, rng) -> np.ndarray:
    """One subset mask: bit j is 1 with probability alpha[j]."""
    a = _check_probs(alpha)
    return (rng.random(a.size) < a).astype(np.uint8)


def sample_subsets(alpha, count: int, rng) -> np.ndarray:
    """(count, M) stack of independent subset masks."""
    a = _check_probs(alpha)
    return (rng.random((count, a.size)) < a).astype(np.uint8)


def pmf(subset, alpha) -> float:
    """Probability of ``subset`` under independent Bernoulli(alpha).

    Convention 0^0 = 1, so alpha entries of exactly 0 or 1 are legal.
    """
    a = _check_probs(alpha)
    z = np.asarray(subset)
    if z.shape != a.shape:
        raise ValueError("subset and alpha lengths differ")
    factors = np.where(z == 1, a, 1.0 - a)
    return float(np.prod(factors))


def pmf_without(subset, alpha, j: int) -> float:
    """PMF with the factor for feature ``j`` left out."""
    a = _check_probs(alpha)
    z = np.asarray(subset)
    if z.shape != a.shape:
        raise ValueError("subset and alpha lengths differ")
    _check_feature(j, a.size)
    factors = np.where(z == 1, a, 1.0 - a)
    factors[j] = 1.0
    return float(np.prod(factors))


def _check_feature(j: int, m: int):
    if not 0 <= j < m:
        raise ValueError(f"feature index {j} out of range for {m} features")


def _ratio_factors(z, alpha, beta, skip=None):
    num = np.where(z == 1, beta, 1.0 - beta)
    den = np.where(z == 1, alpha, 1.0 - alpha)
    if skip is not None:
        num[skip] = 1.0
        den[skip] = 1.0
    if np.any(den == 0.0):
        raise DegenerateRatioError("subset has zero probability under alpha")
    return num / den


def _product_guarded(ratios) -> float:
    """Left-to-right product; switches to log space if a partial exceeds 1e12."""
    prod = 1.0
    for r in ratios:
        prod *= r
        if prod > _OVERFLOW_GUARD:
            if np.any(ratios == 0.0):
                return 0.0
            return float(np.exp(np.log(ratios).sum()))
    return float(prod)


def importance_weight(subset, alpha, beta) -> float:
    """p(subset|beta) / p(subset|alpha), computed factor-wise."""
    a = _check_probs(alpha)
    b = _check_probs(beta)
    z = np.asarray(subset)
    if z.shape != a.shape or b.shape != a.shape:
        raise ValueError("subset, alpha and beta lengths differ")
    return _product_guarded(_ratio_factors(z, a, b))


def importance_weight_without(subset, alpha, beta, j: int) -> float:
    """Importance ratio with feature ``j``'s factor left out of both PMFs."""
    a = _check_probs(alpha)
    b = _check_probs(beta)
    z = np.asarray(subset)
    if z.shape != a.shape or b.shape != a.shape:
        raise ValueError("subset, alpha and beta lengths differ")
    _check_feature(j, a.size)
    return _product_guarded(_ratio_factors(z, a, b, skip=j))


def _log_row(r):
    """Log-space (weight, leave-one-out weights) for one row of ratio factors."""
    m = r.size
    zero = r == 0.0
    nz = int(zero.sum())
    loo = np.zeros(m)
    if nz == 0:
        lr = np.log(r)
        s = lr.sum()
        return float(np.exp(s)), np.exp(s - lr)
    if nz == 1:
        j = int(np.flatnonzero(zero)[0])
        loo[j] = np.exp(np.log(r[~zero]).sum())
    return 0.0, loo


def importance_weights(subsets, alpha, beta) -> np.ndarray:
    """Row-wise importance weights for a (T, M) stack of subsets."""
    w, _ = weight_matrices(subsets, alpha, beta)
    return w


def weight_matrices(subsets, alpha, beta):
    """Weights and leave-one-out weights for a subset stack.

    Returns ``(w, W)`` with ``w[t]`` the full importance ratio of row t and
    ``W[t, j]`` the ratio with feature j's factor left out. With beta equal
    to alpha every entry is exactly 1.
    """
    a = _check_probs(alpha)
    b = _check_probs(beta)
    Z = np.asarray(subsets)
    if Z.ndim != 2 or Z.shape[1] != a.size:
        raise ValueError(f"subsets must be (T, {a.size}), got {Z.shape}")
    num = np.where(Z == 1, b, 1.0 - b)
    den = np.where(Z == 1, a, 1.0 - a)
    if np.any(den == 0.0):
        raise DegenerateRatioError("a subset row has zero probability under alpha")
    R = num / den

    w = np.prod(R, axis=1)
    zeros_per_row = np.count_nonzero(R == 0.0, axis=1)
    W = np.zeros_like(R)
    clean = zeros_per_row == 0
    if np.any(clean):
        # w already includes every factor, so dividing one out is exact
        # enough here; rows that overflow are redone in log space below.
        W[clean] = w[clean, None] / R[clean]
    for t in np.flatnonzero(zeros_per_row == 1):
        j = int(np.flatnonzero(R[t] == 0.0)[0])
        W[t, j] = _product_guarded(np.concatenate([R[t, :j], R[t, j + 1:]]))
    # rows with >= 2 zero factors keep all-zero leave-one-out weights

    suspect = ~np.isfinite(w) | (w > _OVERFLOW_GUARD)
    suspect |= ~np.all(np.isfinite(W), axis=1)
    for t in np.flatnonzero(suspect):
        w[t], W[t] = _log_row(R[t])
    return w, W


def effective_sample_size(weights) -> float:
    """(sum w)^2 / (sum w^2); equals T iff all weights are equal and positive."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D vector")
    if not np.all(np.isfinite(w)) or w.min() < 0.0:
        raise ValueError("weights must be finite and non-negative")
    top = w.max()
    if top == 0.0:
        raise WeightCollapseError("all importance weights are zero")
    v = w / top
    s1 = v.sum()
    s2 = (v * v).sum()
    return float(s1 * s1 / s2)


@dataclass
class ImportanceState:
    """Subsets sampled at the last retrain plus their current weights."""

    alpha_snapshot: np.ndarray
    subsets: np.ndarray
    weights: np.ndarray
    loo_weights: np.ndarray
    t_eff: float

    @classmethod
    def at_retrain(cls, alpha, subsets) -> "ImportanceState":
        """Fresh state right after models were sampled from ``alpha`` (all weights 1)."""
        a = _check_probs(alpha).copy()
        Z = np.ascontiguousarray(subsets, dtype=np.uint8)
        t = Z.shape[0]
        return cls(a, Z, np.ones(t), np.ones_like(Z, dtype=np.float64), float(t))

    def reweighted(self, beta) -> "ImportanceState":
        """State with weights recomputed for new parameters ``beta``.

        Raises WeightCollapseError when every weight vanishes.
        """
        w, W = weight_matrices(self.subsets, self.alpha_snapshot, beta)
        t_eff = effective_sample_size(w)
        return ImportanceState(self.alpha_snapshot, self.subsets, w, W, t_eff)
