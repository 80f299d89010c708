"""Dataset container, training configuration, and z-score preprocessing."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASK_KINDS = (REGRESSION, CLASSIFICATION)


@dataclass
class Dataset:
    """A supervised dataset: float feature matrix plus a target vector.

    Regression targets are floats; classification targets are dense class
    indices ``0..class_count-1`` stored as int64.
    """

    features: np.ndarray
    target: np.ndarray
    task_kind: str
    class_count: int | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        n, m = self.features.shape
        if n < 1 or m < 1:
            raise ValueError(f"features must be non-empty, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        target = np.asarray(self.target)
        if target.shape != (n,):
            raise ValueError(f"target shape {target.shape} does not match {n} samples")
        if self.task_kind == REGRESSION:
            self.target = np.ascontiguousarray(target, dtype=np.float64)
            if not np.all(np.isfinite(self.target)):
                raise ValueError("target contains non-finite values")
            if self.class_count is not None:
                raise ValueError("class_count must be None for regression")
        else:
            if not np.all(target == np.floor(np.asarray(target, dtype=np.float64))):
                raise ValueError("classification target must hold integer class indices")
            self.target = np.ascontiguousarray(target, dtype=np.int64)
            if self.class_count is None:
                self.class_count = int(self.target.max()) + 1 if n else 0
            self.class_count = int(self.class_count)
            if self.class_count < 2:
                raise ValueError(f"need at least 2 classes, got {self.class_count}")
            if self.target.min() < 0 or self.target.max() >= self.class_count:
                raise ValueError("class indices out of range")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "Dataset":
        """Row subset (bootstrap or fold) as a new Dataset."""
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.features[idx], self.target[idx], self.task_kind, self.class_count)


@dataclass
class Standardizer:
    """Per-feature z-score transform fit on training data."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        x = np.asarray(features, dtype=np.float64)
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        # Constant columns get scale 1 so they map to exactly 0, not NaN.
        scale = np.where(scale == 0.0, 1.0, scale)
        return cls(mean=mean, scale=scale)

    def transform(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        return (x - self.mean) / self.scale


def normalize(dataset: Dataset) -> tuple[Dataset, Standardizer]:
    """Z-score the features of ``dataset``; returns the transform for reuse on test data."""
    if dataset.n_samples < 2:
        raise ValueError("need at least 2 samples to estimate feature scales")
    st = Standardizer.fit(dataset.features)
    out = Dataset(st.transform(dataset.features), dataset.target, dataset.task_kind, dataset.class_count)
    return out, st


@dataclass
class TrainConfig:
    """Knobs for subset-probability training.

    ``T`` is the number of base models refit at each retrain event;
    ``teff_retrain_fraction`` triggers a refit when the effective sample
    size of the importance weights drops below that fraction of ``T``.
    """

    T: int = 100
    eta: float = 0.1
    n_epochs: int = 200
    minibatch_fraction: float = 0.10
    restarts: int = 20
    max_steps_between_retrain: int = 100
    teff_retrain_fraction: float = 0.5
    lambda_l1: float = 0.0
    lambda_fused: float = 0.0
    lambda_group: float = 0.0
    rng_seed: int = 0
    alpha_init: float | None = None  # default 5 / T

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")
        if not 0 < self.minibatch_fraction <= 1:
            raise ValueError("minibatch_fraction must be in (0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_steps_between_retrain < 1:
            raise ValueError("max_steps_between_retrain must be >= 1")
        if not 0 < self.teff_retrain_fraction <= 1:
            raise ValueError("teff_retrain_fraction must be in (0, 1]")
        for name in ("lambda_l1", "lambda_fused", "lambda_group"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.alpha_init is not None and not 0 < self.alpha_init <= 1:
            raise ValueError("alpha_init must be in (0, 1]")

    def initial_alpha(self, n_features: int) -> np.ndarray:
        a = self.alpha_init if self.alpha_init is not None else 5.0 / self.T
        return np.full(n_features, float(a))

    def with_updates(self, **kw) -> "TrainConfig":
        return replace(self, **kw)
