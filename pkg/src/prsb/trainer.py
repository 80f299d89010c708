"""Projected mini-batch gradient descent over the selection probabilities.

One restart walks epochs of shuffled mini-batches. At each mini-batch, T
base models are trained on bootstraps of the complement with subsets drawn
from the current probabilities; an inner loop then takes projected
gradient steps on a working copy until it has either taken
``max_steps_between_retrain`` steps or the effective sample size of the
importance weights has dropped below ``teff_retrain_fraction * T``, at
which point the probabilities are committed and the next mini-batch
retrains. Multiple restarts run on independent seed streams and the one
with the lowest objective averaged over the last 50 epochs wins. A final
ensemble is then sampled from the winning probabilities on the full
dataset.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .data import Dataset, TrainConfig
from .gradient import LossSpec, check_loss_task, default_loss, gradient_from_predictions
from .learners import Ensemble, LearnerSpec, fit, stack_predictions
from .sampling import (
    ImportanceState,
    WeightCollapseError,
    effective_sample_size,
    sample_subsets,
    weight_matrices,
)

SELECTION_WINDOW = 50  # epochs averaged into the restart-selection score


class RestartAborted(RuntimeError):
    """A restart hit a non-finite gradient and was abandoned."""


def l1_penalty(alpha, lam: float):
    """lam * sum(alpha) and its gradient (exact on the feasible set alpha >= 0)."""
    a = np.asarray(alpha, dtype=np.float64)
    if lam == 0.0:
        return 0.0, np.zeros_like(a)
    return float(lam * a.sum()), np.full_like(a, lam)


def fused_penalty(grid, lam: float):
    """Total variation over vertical and horizontal grid neighbours.

    Returns (value, subgradient) on the grid, using sign(0) = 0 at kinks.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError("fused penalty needs a 2-D grid")
    sub = np.zeros_like(g)
    if lam == 0.0:
        return 0.0, sub
    dv = g[1:, :] - g[:-1, :]
    dh = g[:, 1:] - g[:, :-1]
    value = lam * (np.abs(dv).sum() + np.abs(dh).sum())
    sv = np.sign(dv)
    sh = np.sign(dh)
    sub[1:, :] += sv
    sub[:-1, :] -= sv
    sub[:, 1:] += sh
    sub[:, :-1] -= sh
    return float(value), lam * sub


@dataclass
class RegularizerSpec:
    """Penalty coefficients; the fused term needs the grid layout of the features."""

    l1: float = 0.0
    fused: float = 0.0
    grid_shape: tuple[int, int] | None = None
    group: float = 0.0  # applied by the network trainer across genes

    def __post_init__(self):
        for name in ("l1", "fused", "group"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} coefficient must be >= 0")
        if self.fused > 0 and self.grid_shape is None:
            raise ValueError("fused penalty needs grid_shape=(H, W)")

    @classmethod
    def from_config(cls, cfg: TrainConfig, grid_shape=None) -> "RegularizerSpec":
        return cls(l1=cfg.lambda_l1, fused=cfg.lambda_fused, grid_shape=grid_shape,
                   group=cfg.lambda_group)

    def evaluate(self, alpha):
        """(value, gradient) of the l1 + fused terms at ``alpha``."""
        a = np.asarray(alpha, dtype=np.float64)
        value, grad = l1_penalty(a, self.l1)
        if self.fused > 0:
            h, w = self.grid_shape
            if h * w != a.size:
                raise ValueError(f"grid {self.grid_shape} does not tile {a.size} features")
            fv, fg = fused_penalty(a.reshape(h, w), self.fused)
            value += fv
            grad = grad + fg.ravel()
        return value, grad


@dataclass
class TrainReport:
    """Everything a training run leaves behind besides the model itself."""

    objective_per_epoch: np.ndarray
    retrain_steps: np.ndarray  # global inner-step count at each retrain event
    teff_trace: np.ndarray  # effective sample size when each phase ended
    final_alpha: np.ndarray
    selection_score: float  # objective averaged over the last 50 epochs
    seed: int
    eta: float
    restart_index: int = 0
    selection_scores: list = field(default_factory=list)  # all restarts, NaN = aborted
    collapse_events: int = 0


class RestartRun:
    """One restart, advanced one mini-batch phase at a time.

    Exposed stepwise so the network trainer can interleave the per-gene
    runs that share a group penalty; ``train`` just loops it to the end.
    """

    def __init__(self, data: Dataset, learner: LearnerSpec, loss: LossSpec,
                 cfg: TrainConfig, reg: RegularizerSpec, gen,
                 extra_penalty=None):
        check_loss_task(loss, data.task_kind)
        self.data = data
        self.learner = learner
        self.loss = loss
        self.cfg = cfg
        self.reg = reg
        self.gen = gen
        self.extra_penalty = extra_penalty
        self.alpha = cfg.initial_alpha(data.n_features)
        # Every batch needs at least one sample; tiny datasets get fewer batches.
        self.n_batches = min(math.ceil(1.0 / cfg.minibatch_fraction), data.n_samples)
        self._queue = []
        self._epoch_objectives = []
        self.objective_per_epoch = []
        self.teff_trace = []
        self.retrain_steps = []
        self.global_step = 0
        self.epoch = 0
        self.collapse_events = 0
        self.done = False

    def _penalty(self, beta):
        value, grad = self.reg.evaluate(beta)
        if self.extra_penalty is not None:
            ev, eg = self.extra_penalty(beta)
            value += ev
            grad = grad + eg
        return value, grad

    def _fit_phase_models(self, pool_idx):
        cfg = self.cfg
        subsets = sample_subsets(self.alpha, cfg.T, self.gen)
        n_pool = pool_idx.size
        boots = self.gen.integers(0, n_pool, size=(cfg.T, n_pool))
        models = [fit(self.learner, self.data, subsets[t], pool_idx[boots[t]])
                  for t in range(cfg.T)]
        return subsets, models

    def run_phase(self) -> bool:
        """Advance one mini-batch; returns False once all epochs are finished."""
        if self.done:
            return False
        cfg = self.cfg
        n = self.data.n_samples
        if not self._queue:
            perm = self.gen.permutation(n)
            self._queue = [np.sort(part) for part in np.array_split(perm, self.n_batches)]
        mb_idx = self._queue.pop(0)
        if self.n_batches == 1:
            pool_idx = np.arange(n)  # degenerate split: train pool is the whole set
        else:
            keep = np.ones(n, dtype=bool)
            keep[mb_idx] = False
            pool_idx = np.flatnonzero(keep)

        subsets, models = self._fit_phase_models(pool_idx)
        self.retrain_steps.append(self.global_step)
        state = ImportanceState.at_retrain(self.alpha, subsets)
        mb = self.data.take(mb_idx)
        P = stack_predictions(models, mb.features)

        beta = self.alpha.copy()
        w = state.weights
        loo = state.loo_weights
        t_eff = float(cfg.T)
        first_loss = None
        steps = 0
        while True:
            est = gradient_from_predictions(P, subsets, w, loo, mb.target, self.loss)
            pen_value, pen_grad = self._penalty(beta)
            if first_loss is None:
                first_loss = est.mean_loss + pen_value
            grad = est.partials + pen_grad
            if not np.all(np.isfinite(grad)):
                raise RestartAborted("non-finite gradient")
            beta = np.clip(beta - cfg.eta * grad, 0.0, 1.0)
            steps += 1
            self.global_step += 1
            try:
                w, loo = weight_matrices(state.subsets, state.alpha_snapshot, beta)
                if not np.all(np.isfinite(w)):
                    raise RestartAborted("importance weights overflowed")
                t_eff = effective_sample_size(w)
            except WeightCollapseError:
                self.collapse_events += 1
                t_eff = 0.0
                break
            if steps >= cfg.max_steps_between_retrain:
                break
            if t_eff < cfg.teff_retrain_fraction * cfg.T:
                break

        self.alpha = beta
        self.teff_trace.append(t_eff)
        self._epoch_objectives.append(first_loss)

        if not self._queue:
            self.objective_per_epoch.append(float(np.mean(self._epoch_objectives)))
            self._epoch_objectives = []
            self.epoch += 1
            if self.epoch >= cfg.n_epochs:
                self.done = True
        return True

    def selection_score(self) -> float:
        window = self.objective_per_epoch[-SELECTION_WINDOW:]
        return float(np.mean(window))

    def finish(self, restart_index: int, fit_final: bool = True):
        """Final ensemble from the optimized probabilities on the full dataset."""
        while not self.done:
            self.run_phase()
        ensemble = None
        if fit_final:
            cfg = self.cfg
            subsets = sample_subsets(self.alpha, cfg.T, self.gen)
            n = self.data.n_samples
            boots = self.gen.integers(0, n, size=(cfg.T, n))
            models = [fit(self.learner, self.data, subsets[t], boots[t])
                      for t in range(cfg.T)]
            ensemble = Ensemble(models, subsets, self.alpha.copy())
        report = TrainReport(
            objective_per_epoch=np.asarray(self.objective_per_epoch),
            retrain_steps=np.asarray(self.retrain_steps, dtype=np.int64),
            teff_trace=np.asarray(self.teff_trace),
            final_alpha=self.alpha.copy(),
            selection_score=self.selection_score(),
            seed=self.cfg.rng_seed,
            eta=self.cfg.eta,
            restart_index=restart_index,
            collapse_events=self.collapse_events,
        )
        return self.alpha.copy(), ensemble, report


def _run_one_restart(args):
    data, learner, loss, cfg, reg, restart_index, fit_final = args
    gen = rng.stream(cfg.rng_seed, "restart", restart_index)
    run = RestartRun(data, learner, loss, cfg, reg, gen)
    try:
        return restart_index, run.finish(restart_index, fit_final)
    except RestartAborted:
        return restart_index, None


def train(data: Dataset, learner: LearnerSpec, loss: LossSpec | None = None,
          cfg: TrainConfig | None = None, reg: RegularizerSpec | None = None,
          n_jobs: int = 1, grid_shape=None, progress=None):
    """Run all restarts and return (alpha, ensemble, report) of the winner.

    Restarts share nothing, so ``n_jobs > 1`` farms them out to worker
    processes; results are identical either way because every restart
    derives its own seed stream. ``progress(restart_index, score)`` is
    called as each restart finishes (score is NaN for aborted restarts).
    """
    if cfg is None:
        cfg = TrainConfig()
    if loss is None:
        loss = default_loss(data.task_kind)
    if reg is None:
        reg = RegularizerSpec.from_config(cfg, grid_shape=grid_shape)
    check_loss_task(loss, data.task_kind)

    jobs = [(data, learner, loss, cfg, reg, r, True) for r in range(cfg.restarts)]
    results = []

    def _collect(r, out):
        results.append((r, out))
        if progress is not None:
            progress(r, math.nan if out is None else out[2].selection_score)

    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for r, out in pool.map(_run_one_restart, jobs):
                _collect(r, out)
    else:
        for job in jobs:
            _collect(*_run_one_restart(job))

    scores = [math.nan if out is None else out[2].selection_score for _, out in results]
    finished = [(r, out) for r, out in results
                if out is not None and math.isfinite(out[2].selection_score)]
    if not finished:
        raise RuntimeError("every restart aborted on a non-finite gradient")
    best_index, (alpha, ensemble, report) = min(
        finished, key=lambda item: (item[1][2].selection_score, item[0]))
    report.selection_scores = scores
    return alpha, ensemble, report


def predict(ensemble: Ensemble, x):
    """Unweighted mean prediction of the final ensemble for one sample."""
    out = ensemble.predict_batch(np.asarray(x, dtype=np.float64)[None, :])
    return out[0] if out.ndim == 2 else float(out[0])
