"""Multi-output feature selection over a shared expression matrix.

Every gene is regressed on the candidate regulators (itself excluded) with
its own selection probabilities; a group penalty on each regulator's row
of the probability matrix couples the per-gene problems, shrinking whole
rows toward zero so that a regulator is either broadly used or dropped.

Columns advance in synchronized rounds: each takes one mini-batch phase
against row norms frozen at the round boundary, then the norms refresh.
Because every column only reads the frozen snapshot, the order in which
columns run inside a round cannot change the result, which is what makes
the rounds safe to parallelize in principle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .data import REGRESSION, Dataset, TrainConfig
from .gradient import default_loss
from .learners import LearnerSpec
from .trainer import RegularizerSpec, RestartAborted, RestartRun

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (0.0, 0.002, 0.005, 0.007, 0.01, 0.015)


@dataclass
class GrnProblem:
    """An N×G expression matrix plus the genes allowed to act as regulators."""

    expression: np.ndarray
    regulators: np.ndarray  # indices into the G genes, the rows of alpha
    gold_edges: set | None = None  # optional {(regulator gene, target gene)}
    names: list | None = None  # optional gene names, len G

    def __post_init__(self):
        self.expression = np.asarray(self.expression, dtype=np.float64)
        if self.expression.ndim != 2:
            raise ValueError("expression must be an N x G matrix")
        if not np.all(np.isfinite(self.expression)):
            raise ValueError("expression contains non-finite values")
        n, g = self.expression.shape
        if n < 2:
            raise ValueError("need at least two samples")
        self.regulators = np.asarray(self.regulators, dtype=np.int64)
        if self.regulators.ndim != 1 or self.regulators.size == 0:
            raise ValueError("need at least one candidate regulator")
        if np.unique(self.regulators).size != self.regulators.size:
            raise ValueError("duplicate regulator indices")
        if self.regulators.min() < 0 or self.regulators.max() >= g:
            raise ValueError("regulator index out of range")
        if self.regulators.size > g:
            raise ValueError("more regulators than genes")
        if self.names is not None and len(self.names) != g:
            raise ValueError(f"expected {g} gene names, got {len(self.names)}")
        if self.gold_edges is not None:
            self.gold_edges = {(int(r), int(t)) for r, t in self.gold_edges}
            regs = set(self.regulators.tolist())
            for r, t in self.gold_edges:
                if r == t:
                    raise ValueError(f"gold edge {r}->{t} is a self-loop")
                if r not in regs or not 0 <= t < g:
                    raise ValueError(f"gold edge {r}->{t} not in regulators x genes")

    @property
    def n_samples(self) -> int:
        return self.expression.shape[0]

    @property
    def n_genes(self) -> int:
        return self.expression.shape[1]

    @property
    def n_regulators(self) -> int:
        return self.regulators.size

    def column_dataset(self, g: int):
        """Regression data for target gene ``g`` and the alpha rows it touches.

        Returns (dataset, rows) where rows[i] is the row of the M x G alpha
        matrix that the dataset's feature i corresponds to; the target gene
        itself is excluded from its own candidate regulators.
        """
        rows = np.flatnonzero(self.regulators != g)
        if rows.size == 0:
            raise ValueError(f"gene {g} has no candidate regulators besides itself")
        features = self.expression[:, self.regulators[rows]]
        return Dataset(features, self.expression[:, g], REGRESSION), rows


@dataclass
class EdgeRanking:
    """(regulator gene, target gene, weight) triples, heaviest first."""

    edges: list

    def __post_init__(self):
        for r, t, _ in self.edges:
            if r == t:
                raise ValueError(f"self-loop {r}->{t} in edge ranking")
        weights = [w for _, _, w in self.edges]
        if any(a < b for a, b in zip(weights, weights[1:])):
            raise ValueError("edge ranking is not sorted by descending weight")

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def items(self):
        """The (regulator, target) pairs in rank order, for AUPR evaluation."""
        return [(r, t) for r, t, _ in self.edges]


def group_penalty(alpha_matrix, lam: float):
    """lam * sum_j ||alpha_j.||_2 and its subgradient (0 on zero rows)."""
    a = np.asarray(alpha_matrix, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("group penalty needs an M x G matrix")
    norms = np.sqrt((a * a).sum(axis=1))
    if lam == 0.0:
        return 0.0, np.zeros_like(a)
    safe = np.where(norms == 0.0, 1.0, norms)
    sub = lam * a / safe[:, None]
    return float(lam * norms.sum()), sub


def rank_edges(alpha_matrix, problem: GrnProblem) -> EdgeRanking:
    """All regulator->target pairs except self-loops, by descending weight.

    Ties break on (regulator, target) ascending so the ranking is a pure
    function of the alpha matrix.
    """
    a = np.asarray(alpha_matrix, dtype=np.float64)
    m, g = problem.n_regulators, problem.n_genes
    if a.shape != (m, g):
        raise ValueError(f"alpha matrix must be {(m, g)}, got {a.shape}")
    edges = []
    for j, reg in enumerate(problem.regulators):
        for tgt in range(g):
            if reg == tgt:
                continue
            edges.append((int(reg), int(tgt), float(a[j, tgt])))
    edges.sort(key=lambda e: (-e[2], e[0], e[1]))
    return EdgeRanking(edges)


class _Column:
    """One target gene's run plus its view of the frozen row norms."""

    __slots__ = ("g", "rows", "run", "other_sq", "failed")

    def __init__(self, g, rows, run):
        self.g = g
        self.rows = rows
        self.run = run
        self.other_sq = np.zeros(rows.size)
        self.failed = False


def _column_penalty(lam: float, col: _Column):
    if lam == 0.0:
        return None

    def penalty(beta):
        norms = np.sqrt(col.other_sq + beta * beta)
        safe = np.where(norms == 0.0, 1.0, norms)
        return float(lam * norms.sum()), lam * beta / safe

    return penalty


def _refresh_row_norms(columns, snapshot):
    """Round barrier: commit every column's alpha, then hand out row norms."""
    for col in columns:
        snapshot[col.rows, col.g] = col.run.alpha
    sq = snapshot * snapshot
    total = sq.sum(axis=1)
    for col in columns:
        col.other_sq = np.maximum(total[col.rows] - sq[col.rows, col.g], 0.0)


def grn_train(problem: GrnProblem, learner: LearnerSpec, cfg: TrainConfig,
              lam: float, column_errors: dict | None = None):
    """Train all target genes jointly and return (alpha matrix, edge ranking).

    Each gene g uses the seed stream derived from (cfg.rng_seed, "gene", g),
    so with lam=0 the columns match independent single-gene training
    bit for bit. Restart selection is per column (lowest mean objective over
    the trailing window, earlier restart on ties). Columns whose restarts all
    abort are recorded in ``column_errors`` and left at zero.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    m, n_genes = problem.n_regulators, problem.n_genes
    loss = default_loss(REGRESSION)
    reg = RegularizerSpec.from_config(cfg)

    datasets = {}
    for g in range(n_genes):
        datasets[g] = problem.column_dataset(g)

    best_score = {g: (np.inf, -1) for g in range(n_genes)}  # (score, restart)
    best_alpha = {g: None for g in range(n_genes)}
    errors = {g: [] for g in range(n_genes)}

    for r in range(cfg.restarts):
        columns = []
        for g in range(n_genes):
            data_g, rows = datasets[g]
            cfg_g = cfg.with_updates(rng_seed=rng.derive_seed(cfg.rng_seed, "gene", g))
            gen = rng.stream(cfg_g.rng_seed, "restart", r)
            col = _Column(g, rows, None)
            col.run = RestartRun(data_g, learner, loss, cfg_g, reg, gen,
                                 extra_penalty=_column_penalty(lam, col))
            columns.append(col)

        snapshot = np.zeros((m, n_genes))
        _refresh_row_norms(columns, snapshot)
        live = list(columns)
        while live:
            for col in live:
                try:
                    col.run.run_phase()
                except RestartAborted as exc:
                    col.failed = True
                    errors[col.g].append(f"restart {r}: {exc}")
            live = [c for c in live if not c.failed and not c.run.done]
            _refresh_row_norms(columns, snapshot)

        for col in columns:
            if col.failed:
                continue
            score = col.run.selection_score()
            if np.isfinite(score) and score < best_score[col.g][0]:
                best_score[col.g] = (score, r)
                best_alpha[col.g] = col.run.alpha.copy()

    alpha = np.zeros((m, n_genes))
    for g in range(n_genes):
        if best_alpha[g] is None:
            log.warning("gene %d: every restart aborted (%s); column left at zero",
                        g, "; ".join(errors[g]))
            if column_errors is not None:
                column_errors[g] = "; ".join(errors[g])
            continue
        rows = datasets[g][1]
        alpha[rows, g] = best_alpha[g]

    return alpha, rank_edges(alpha, problem)


def select_lambda(alpha_by_lambda: dict) -> float:
    """Largest penalty whose average per-gene alpha sum stays above 1.

    Falls back to the smallest candidate when none qualifies, which keeps
    the sweep total even on problems where regularization bites early.
    """
    values = sorted(float(v) for v in alpha_by_lambda)
    if not values or values[0] < 0:
        raise ValueError("lambda grid must be non-empty and non-negative")
    chosen = None
    for lam in values:
        mean_sum = float(np.asarray(alpha_by_lambda[lam]).sum(axis=0).mean())
        log.info("lambda sweep: lam=%g mean alpha sum=%.3f", lam, mean_sum)
        if mean_sum > 1.0:
            chosen = lam
    if chosen is None:
        log.warning("no lambda in %s kept the mean alpha sum above 1; "
                    "falling back to %g", values, values[0])
        return values[0]
    return chosen


def lambda_sweep(problem: GrnProblem, learner: LearnerSpec, cfg: TrainConfig,
                 grid=None) -> float:
    """Train across the penalty grid and pick a value with ``select_lambda``."""
    if grid is None:
        grid = DEFAULT_LAMBDA_GRID
    values = sorted({float(v) for v in grid})
    if not values or values[0] < 0:
        raise ValueError("lambda grid must be non-empty and non-negative")
    return select_lambda({lam: grn_train(problem, learner, cfg, lam)[0]
                          for lam in values})
