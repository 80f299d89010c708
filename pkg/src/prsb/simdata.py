"""Seeded generators for the four simulated benchmark problems.

Each problem embeds a small set of relevant features (always the leading
indices) in a few hundred noise features, with 300 training and 500 test
samples per dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import rng
from .data import CLASSIFICATION, REGRESSION, Dataset

CHECKERBOARD = "checkerboard"
FRIEDMAN = "friedman"
HYPERCUBE = "hypercube"
LINEAR = "linear"

# kind -> (total features, relevant features, task)
_CANONICAL = {
    CHECKERBOARD: (304, 4, REGRESSION),
    FRIEDMAN: (305, 5, REGRESSION),
    HYPERCUBE: (305, 5, CLASSIFICATION),
    LINEAR: (310, 10, CLASSIFICATION),
}
PROBLEM_KINDS = tuple(_CANONICAL)

_TOEPLITZ_RHO = 0.9
_FRIEDMAN_SCALE = 0.5 / 3.0


@dataclass
class SimProblemSpec:
    kind: str
    n_features: int
    n_relevant: int
    n_train: int = 300
    n_test: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _CANONICAL:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        m, m_rel, _ = _CANONICAL[self.kind]
        if (self.n_features, self.n_relevant) != (m, m_rel):
            raise ValueError(
                f"{self.kind} is defined with {m} features ({m_rel} relevant), "
                f"got {self.n_features}/{self.n_relevant}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be positive")

    @property
    def task_kind(self) -> str:
        return _CANONICAL[self.kind][2]


def problem_spec(kind: str, seed: int, n_train: int = 300, n_test: int = 500) -> SimProblemSpec:
    """Spec for one of the named problems at its canonical size."""
    if kind not in _CANONICAL:
        raise ValueError(f"unknown problem kind {kind!r}")
    m, m_rel, _ = _CANONICAL[kind]
    return SimProblemSpec(kind, m, m_rel, n_train, n_test, seed)


@lru_cache(maxsize=8)
def _toeplitz_chol(m: int) -> np.ndarray:
    idx = np.arange(m)
    cov = _TOEPLITZ_RHO ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(cov)


def _correlated_normal(g, n: int, m: int) -> np.ndarray:
    return g.standard_normal((n, m)) @ _toeplitz_chol(m).T


def _checkerboard(g, n: int, m: int):
    X = _correlated_normal(g, n, m)
    y = 2.0 * X[:, 0] * X[:, 1] + 2.0 * X[:, 2] * X[:, 3] + g.standard_normal(n)
    return X, y, REGRESSION, None


def _friedman(g, n: int, m: int):
    X = _FRIEDMAN_SCALE * _correlated_normal(g, n, m)
    y = (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
         + 20.0 * (X[:, 2] - 0.5) ** 2
         + 10.0 * X[:, 3] + 5.0 * X[:, 4]
         + 0.1 * g.standard_normal(n))
    return X, y, REGRESSION, None


def _hypercube(g, n: int, m: int):
    m_rel = 5
    codes = g.choice(2 ** m_rel, size=4, replace=False)
    vertices = ((codes[:, None] >> np.arange(m_rel)) & 1) * 2.0 - 1.0
    labels = np.array([0, 0, 1, 1])
    counts = np.full(4, n // 4)
    counts[: n % 4] += 1
    X_rel = np.vstack([vertices[c] + g.standard_normal((counts[c], m_rel))
                       for c in range(4)])
    y = np.repeat(labels, counts)
    X = np.column_stack([X_rel, g.standard_normal((n, m - m_rel))])
    perm = g.permutation(n)
    return X[perm], y[perm], CLASSIFICATION, 2


def _linear(g, n: int, m: int):
    m_rel = 10
    X = g.standard_normal((n, m))
    w = g.uniform(0.0, 100.0, size=m_rel)
    score = X[:, :m_rel] @ w
    y = (score > np.median(score)).astype(np.int64)
    return X, y, CLASSIFICATION, 2


_GENERATORS = {
    CHECKERBOARD: _checkerboard,
    FRIEDMAN: _friedman,
    HYPERCUBE: _hypercube,
    LINEAR: _linear,
}


def generate(spec: SimProblemSpec):
    """Draw (train, test, relevant) for the given problem spec.

    Train and test come from one joint pool so class balance (linear) and
    cluster allocation (hypercube) hold across the split.
    """
    g = rng.stream(spec.seed, "simdata", spec.kind)
    n = spec.n_train + spec.n_test
    X, y, task, classes = _GENERATORS[spec.kind](g, n, spec.n_features)
    train = Dataset(X[: spec.n_train], y[: spec.n_train], task, classes)
    test = Dataset(X[spec.n_train:], y[spec.n_train:], task, classes)
    return train, test, np.arange(spec.n_relevant)
