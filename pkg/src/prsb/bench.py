"""Benchmark harness over the simulated problems.

A cell is (problem, method, learner, seed). Each finished cell writes its
metric rows to its own checkpoint CSV so an interrupted sweep resumes by
re-reading those files instead of recomputing; reruns are idempotent. The
aggregate table reports mean ± sample standard deviation (ddof=1) per
(problem, method, learner, metric) over seeds.
"""

from __future__ import annotations

import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import rng, trainer
from .baselines import RsbConfig, rsb_train, single_train
from .data import CLASSIFICATION, Dataset, TrainConfig, normalize
from .io import ReportRow, read_report, write_report
from .learners import LearnerSpec
from .metrics import aupr, rank_features, test_error
from .simdata import PROBLEM_KINDS, generate, problem_spec

METHODS = ("single", "rsb", "prsb")
LEARNERS = ("tree", "knn")


def learner_spec(name: str) -> LearnerSpec:
    if name == "tree":
        return LearnerSpec(kind="tree")
    if name == "knn":
        return LearnerSpec(kind="knn", k_neighbors=5)
    raise ValueError(f"unknown learner {name!r}")


def _ts_metric(task_kind: str) -> str:
    return "ts_error" if task_kind == CLASSIFICATION else "ts_mse"


def cell_id(problem: str, method: str, learner: str, seed: int) -> str:
    return f"{problem}_{method}_{learner}_seed{seed}"


def run_cell(problem: str, method: str, learner: str, seed: int,
             cfg: TrainConfig, cv_folds: int = 10) -> list:
    """All metric rows for one benchmark cell."""
    if problem not in PROBLEM_KINDS:
        raise ValueError(f"unknown problem {problem!r}")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    spec = learner_spec(learner)
    train_raw, test_raw, relevant = generate(problem_spec(problem, seed=seed))
    train_data, scaler = normalize(train_raw)
    test_data = Dataset(scaler.transform(test_raw.features), test_raw.target,
                        test_raw.task_kind, test_raw.class_count)
    run_id = cell_id(problem, method, learner, seed)
    metric = _ts_metric(train_data.task_kind)

    def row(name, value):
        return ReportRow(run_id, seed, method, learner, problem, name, float(value))

    rows = []
    if method == "single":
        model = single_train(train_data, spec)
        err = test_error(model.predict_batch(test_data.features), test_data.target,
                         test_data.task_kind)
        rows.append(row(metric, err))
    elif method == "rsb":
        g = rng.stream(seed, "bench", "rsb", problem, learner)
        res = rsb_train(train_data, spec, RsbConfig(T=cfg.T, cv_folds=cv_folds), g)
        err = test_error(res.ensemble.predict_batch(test_data.features),
                         test_data.target, test_data.task_kind)
        rows.append(row(metric, err))
        rows.append(row("chosen_k", res.chosen_k))
    else:
        cfg_cell = cfg.with_updates(rng_seed=seed)
        alpha, ensemble, report = trainer.train(train_data, spec, cfg=cfg_cell)
        err = test_error(ensemble.predict_batch(test_data.features),
                         test_data.target, test_data.task_kind)
        rows.append(row(metric, err))
        rows.append(row("aupr", aupr(rank_features(alpha), set(relevant.tolist()),
                                     n_items=train_data.n_features)))
        rows.append(row("alpha_sum", alpha.sum()))
        rows.append(row("collapse_events", report.collapse_events))
    return rows


def _atomic_write_report(path: str, rows) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    os.close(fd)
    try:
        write_report(tmp, rows)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _cell_worker(args):
    problem, method, learner, seed, cfg, cv_folds, path = args
    rows = run_cell(problem, method, learner, seed, cfg, cv_folds)
    _atomic_write_report(path, rows)
    return rows


def run_suite(out_dir, problems, methods, learners, seeds, cfg: TrainConfig,
              cv_folds: int = 10, n_jobs: int = 1, progress=None):
    """Run (or resume) every cell; returns all rows sorted canonically."""
    cell_dir = os.path.join(out_dir, "cells")
    os.makedirs(cell_dir, exist_ok=True)
    if progress is None:
        def progress(msg):
            print(msg, file=sys.stderr)

    todo = []
    all_rows = []
    for problem in problems:
        for method in methods:
            for learner in learners:
                for seed in seeds:
                    path = os.path.join(cell_dir,
                                        cell_id(problem, method, learner, seed) + ".csv")
                    if os.path.exists(path):
                        rows = read_report(path)
                        all_rows.extend(rows)
                        progress(f"resume {cell_id(problem, method, learner, seed)} "
                                 f"({len(rows)} rows)")
                    else:
                        todo.append((problem, method, learner, seed, cfg, cv_folds, path))

    n = len(todo)
    if n_jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for i, rows in enumerate(pool.map(_cell_worker, todo)):
                all_rows.extend(rows)
                progress(f"done {rows[0].run_id} [{i + 1}/{n}]")
    else:
        for i, job in enumerate(todo):
            rows = _cell_worker(job)
            all_rows.extend(rows)
            progress(f"done {rows[0].run_id} [{i + 1}/{n}]")

    all_rows.sort(key=lambda r: (r.dataset, r.method, r.learner, r.metric, r.seed))
    return all_rows


def summarize(rows):
    """Per-(dataset, method, learner, metric) mean and sd (ddof=1) over seeds.

    Returns a list of dicts sorted the same way the rows are.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.dataset, r.method, r.learner, r.metric), []).append(r.value)
    out = []
    for key in sorted(groups):
        values = np.asarray(groups[key])
        sd = values.std(ddof=1) if values.size > 1 else 0.0
        out.append({"dataset": key[0], "method": key[1], "learner": key[2],
                    "metric": key[3], "mean": float(values.mean()), "sd": float(sd),
                    "n": int(values.size)})
    return out


def render_table(summary) -> str:
    """Rows like the paper's result tables: problem x metric, mean ± sd cells."""
    columns = sorted({(s["method"], s["learner"]) for s in summary})
    lookup = {(s["dataset"], s["metric"], s["method"], s["learner"]): s for s in summary}
    header = ["dataset", "metric"] + [f"{m}-{l}" for m, l in columns]
    lines = []
    for dataset in sorted({s["dataset"] for s in summary}):
        metrics = sorted({s["metric"] for s in summary if s["dataset"] == dataset})
        for metric in metrics:
            cells = []
            for m, l in columns:
                s = lookup.get((dataset, metric, m, l))
                cells.append("-" if s is None else f"{s['mean']:.4f} ± {s['sd']:.4f}")
            lines.append([dataset, metric] + cells)
    widths = [max(len(row[i]) for row in [header] + lines) for i in range(len(header))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join(fmt.format(*row) for row in [header] + lines) + "\n"


def write_summary_csv(path, summary) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "method", "learner", "metric", "mean", "sd", "n"])
        for s in summary:
            writer.writerow([s["dataset"], s["method"], s["learner"], s["metric"],
                             repr(s["mean"]), repr(s["sd"]), s["n"]])
