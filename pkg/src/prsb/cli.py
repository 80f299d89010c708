"""Command-line surface for reproduction runs.

Subcommands: ``simulate`` (write a benchmark problem to CSV), ``train``
(subset-probability training), ``baseline`` (single model, random-subspace
bagging, or the distribution-estimation search), ``grn`` (joint network
inference with the lambda sweep), and ``bench`` (the full problem x method
x learner x seed sweep with per-seed checkpoints).

Option values resolve as: command-line flag > config file > built-in
default. The config file (--config) is flat ``key=value`` text, one pair
per line, ``#`` comments allowed; keys are the long flag names with
dashes or underscores (``minibatch-fraction=0.2``).

Progress goes to stderr; results go only to the requested output files.
The exit status is 0 only when every requested output was written. The
``PRSB_THREADS`` environment variable caps worker processes.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench as bench_mod
from . import io as pio
from . import rng, trainer
from .baselines import EdaConfig, RsbConfig, eda_rank, rsb_train, single_train
from .data import CLASSIFICATION, Dataset, TrainConfig, normalize
from .gradient import CROSS_ENTROPY, MSE, LossSpec
from .learners import LearnerSpec
from .metrics import aupr, rank_features, test_error
from .network import DEFAULT_LAMBDA_GRID, GrnProblem, grn_train, lambda_sweep
from .simdata import PROBLEM_KINDS, generate, problem_spec


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise pio.ParseError(path, f"expected key=value, got {line!r}", line=i)
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


class Options:
    """Flag > config-file > default resolution for one parsed subcommand."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.config = config

    def get(self, name, default=None, cast=None):
        value = getattr(self.args, name, None)
        if value is None and name in self.config:
            value = self.config[name]
        if value is None:
            return default
        if cast is not None and isinstance(value, str):
            try:
                value = cast(value)
            except ValueError:
                raise ValueError(f"bad value for {name}: {value!r}") from None
        return value

    def get_bool(self, name, default=False):
        value = getattr(self.args, name, None)
        if value:  # store_true flag given on the command line
            return True
        if name in self.config:
            return self.config[name].lower() in ("1", "true", "yes", "on")
        return default


def _max_workers(requested: int) -> int:
    cap = os.environ.get("PRSB_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(requested, limit))


def _parse_int_or_name(value):
    try:
        return int(value)
    except ValueError:
        return value


def _parse_seeds(text: str) -> list:
    """Seed lists: '0..9' (inclusive range) or '0,3,7'."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t.strip() != ""]


def _parse_grid_shape(text: str):
    try:
        h, w = text.lower().split("x", 1)
        return int(h), int(w)
    except ValueError:
        raise ValueError(f"--fused expects HxW (e.g. 8x8), got {text!r}") from None


# --- shared flag groups ------------------------------------------------------


def _add_data_flags(p):
    p.add_argument("--train", help="training table (.csv/.tsv)")
    p.add_argument("--test", help="held-out table for test metrics")
    p.add_argument("--no-header", action="store_true",
                   help="tables have no header row")
    p.add_argument("--target-column", help="target position or header name "
                                           "(default: last column)")
    p.add_argument("--task", choices=["auto", "regression", "classification"],
                   help="override target-type inference (default auto)")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip the zero-mean unit-variance feature transform")
    p.add_argument("--relevant", help="known relevant feature indices, one per "
                                      "line, for ranking quality")


def _add_learner_flags(p):
    p.add_argument("--learner", choices=["tree", "knn"], help="base model (default tree)")
    p.add_argument("--k-neighbors", help="kNN neighbour count (default 5)")
    p.add_argument("--max-depth", help="tree depth cap (default unlimited)")
    p.add_argument("--min-samples-split", help="tree split threshold (default 2)")


def _add_trainer_flags(p):
    p.add_argument("--models", help="ensemble size T (default 100)")
    p.add_argument("--eta", help="gradient step size (default 0.1)")
    p.add_argument("--epochs", help="training epochs (default 200)")
    p.add_argument("--minibatch-fraction", help="mini-batch size as a fraction "
                                                "(default 0.1)")
    p.add_argument("--restarts", help="independent restarts (default 20)")
    p.add_argument("--max-steps", help="inner steps between retrains (default 100)")
    p.add_argument("--teff-fraction", help="effective-sample-size retrain "
                                           "threshold (default 0.5)")
    p.add_argument("--alpha-init", help="initial probability (default 5/T)")
    p.add_argument("--lambda-l1", help="sparsity penalty coefficient (default 0)")
    p.add_argument("--fused", help="feature grid HxW for the fused penalty")
    p.add_argument("--lambda-fused", help="fused penalty coefficient (default 0)")


def _add_common_flags(p):
    p.add_argument("--seed", help="root random seed (default 0)")
    p.add_argument("--config", help="key=value defaults file")
    p.add_argument("--jobs", help="worker processes (default 1; capped by "
                                  "PRSB_THREADS)")


# --- option -> object builders ----------------------------------------------


def _learner_from(opt: Options) -> LearnerSpec:
    kind = opt.get("learner", "tree")
    if kind == "tree":
        return LearnerSpec(kind="tree",
                           max_depth=opt.get("max_depth", None, int),
                           min_samples_split=opt.get("min_samples_split", 2, int))
    return LearnerSpec(kind="knn", k_neighbors=opt.get("k_neighbors", 5, int))


def _train_config(opt: Options, seed: int) -> TrainConfig:
    return TrainConfig(
        T=opt.get("models", 100, int),
        eta=opt.get("eta", 0.1, float),
        n_epochs=opt.get("epochs", 200, int),
        minibatch_fraction=opt.get("minibatch_fraction", 0.1, float),
        restarts=opt.get("restarts", 20, int),
        max_steps_between_retrain=opt.get("max_steps", 100, int),
        teff_retrain_fraction=opt.get("teff_fraction", 0.5, float),
        alpha_init=opt.get("alpha_init", None, float),
        lambda_l1=opt.get("lambda_l1", 0.0, float),
        lambda_fused=opt.get("lambda_fused", 0.0, float),
        rng_seed=seed,
    )


def _load_dataset(opt: Options, which: str) -> Dataset:
    path = opt.get(which)
    if path is None:
        raise ValueError(f"--{which} is required")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{which} file not found: {path}")
    task = opt.get("task", "auto")
    target = opt.get("target_column")
    return pio.read_delimited(
        path,
        has_header=not opt.get_bool("no_header"),
        target_column=-1 if target is None else _parse_int_or_name(target),
        task=None if task == "auto" else task,
    )


def _load_relevant(opt: Options):
    path = opt.get("relevant")
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        return {int(line.strip()) for line in fh if line.strip()}


def _maybe_normalized(opt: Options, data: Dataset):
    if opt.get_bool("no_normalize"):
        return data, None
    return normalize(data)


def _transformed_test(opt: Options, scaler) -> Dataset | None:
    if opt.get("test") is None:
        return None
    test = _load_dataset(opt, "test")
    if scaler is None:
        return test
    return Dataset(scaler.transform(test.features), test.target,
                   test.task_kind, test.class_count)


def _dataset_label(opt: Options) -> str:
    stem = os.path.basename(opt.get("train"))
    return stem.rsplit(".", 1)[0] if "." in stem else stem


def _ts_rows(run_id, seed, method, learner_name, label, predictions, test, rows):
    metric = "ts_error" if test.task_kind == CLASSIFICATION else "ts_mse"
    err = test_error(predictions, test.target, test.task_kind)
    rows.append(pio.ReportRow(run_id, seed, method, learner_name, label, metric, err))
    _say(f"{metric}: {err:.6f}")


# --- subcommands -------------------------------------------------------------


def cmd_simulate(opt: Options) -> int:
    problem = opt.get("problem")
    seed = opt.get("seed", 0, int)
    out_dir = opt.get("out_dir")
    spec = problem_spec(problem, seed=seed,
                        n_train=opt.get("n_train", 300, int),
                        n_test=opt.get("n_test", 500, int))
    train, test, relevant = generate(spec)
    os.makedirs(out_dir, exist_ok=True)
    train_path = os.path.join(out_dir, "train.csv")
    test_path = os.path.join(out_dir, "test.csv")
    relevant_path = os.path.join(out_dir, "relevant.txt")
    pio.write_delimited(train_path, train)
    pio.write_delimited(test_path, test)
    with open(relevant_path, "w", encoding="utf-8") as fh:
        for j in relevant:
            fh.write(f"{j}\n")
    _say(f"wrote {train_path} ({train.n_samples} rows), {test_path} "
         f"({test.n_samples} rows), {relevant_path}")
    return 0


def cmd_train(opt: Options) -> int:
    seed = opt.get("seed", 0, int)
    alpha_out = opt.get("alpha_out")
    report_out = opt.get("report_out")
    if alpha_out is None or report_out is None:
        raise ValueError("--alpha-out and --report-out are required")
    metrics_out = opt.get("metrics_out")
    if (opt.get("test") is None) != (metrics_out is None):
        raise ValueError("--test and --metrics-out go together")

    raw = _load_dataset(opt, "train")
    data, scaler = _maybe_normalized(opt, raw)
    test = _transformed_test(opt, scaler)
    learner = _learner_from(opt)
    cfg = _train_config(opt, seed)
    loss_name = opt.get("loss")
    loss = None if loss_name is None else LossSpec(kind=loss_name)
    fused = opt.get("fused")
    grid_shape = _parse_grid_shape(fused) if fused is not None else None
    n_jobs = _max_workers(opt.get("jobs", 1, int))

    def progress(r, score):
        _say(f"restart {r + 1}/{cfg.restarts}: selection score "
             f"{'aborted' if np.isnan(score) else f'{score:.6f}'}")

    alpha, ensemble, report = trainer.train(data, learner, loss=loss, cfg=cfg,
                                            grid_shape=grid_shape, n_jobs=n_jobs,
                                            progress=progress)
    teff = report.teff_trace
    _say(f"winner: restart {report.restart_index}, objective "
         f"{report.objective_per_epoch[0]:.6f} -> {report.objective_per_epoch[-1]:.6f}, "
         f"T_eff min/median/max {teff.min():.1f}/{np.median(teff):.1f}/{teff.max():.1f}, "
         f"sum(alpha) {alpha.sum():.3f}")
    pio.write_alpha(alpha_out, alpha)
    pio.write_train_report(report_out, report)

    if test is not None:
        label = _dataset_label(opt)
        run_id = f"prsb-{learner.kind}-s{seed}"
        rows = []
        _ts_rows(run_id, seed, "prsb", learner.kind, label,
                 ensemble.predict_batch(test.features), test, rows)
        relevant = _load_relevant(opt)
        if relevant is not None:
            score = aupr(rank_features(alpha), relevant, n_items=data.n_features)
            rows.append(pio.ReportRow(run_id, seed, "prsb", learner.kind, label,
                                      "aupr", score))
        pio.write_report(metrics_out, rows)
    return 0


def cmd_baseline(opt: Options) -> int:
    method = opt.get("method")
    seed = opt.get("seed", 0, int)
    raw = _load_dataset(opt, "train")
    data, scaler = _maybe_normalized(opt, raw)
    test = _transformed_test(opt, scaler)
    learner = _learner_from(opt)
    label = _dataset_label(opt)
    run_id = f"{method}-{learner.kind}-s{seed}"
    metrics_out = opt.get("metrics_out")
    alpha_out = opt.get("alpha_out")
    relevant = _load_relevant(opt)
    rows = []

    if method == "single":
        model = single_train(data, learner)
        if test is not None:
            _ts_rows(run_id, seed, method, learner.kind, label,
                     model.predict_batch(test.features), test, rows)
    elif method == "rsb":
        grid_text = opt.get("k_grid")
        cfg = RsbConfig(
            T=opt.get("models", 100, int),
            k_grid=None if grid_text is None else [int(t) for t in grid_text.split(",")],
            cv_folds=opt.get("folds", 10, int),
        )
        res = rsb_train(data, learner, cfg, rng.stream(seed, "baseline", "rsb"))
        _say(f"chosen K: {res.chosen_k} (cv error {res.cv_errors[res.chosen_k]:.6f})")
        rows.append(pio.ReportRow(run_id, seed, method, learner.kind, label,
                                  "chosen_k", res.chosen_k))
        rows.append(pio.ReportRow(run_id, seed, method, learner.kind, label,
                                  "cv_error", res.cv_errors[res.chosen_k]))
        if test is not None:
            _ts_rows(run_id, seed, method, learner.kind, label,
                     res.ensemble.predict_batch(test.features), test, rows)
        if alpha_out is not None:
            pio.write_alpha(alpha_out, res.ensemble.alpha)
    elif method == "eda":
        cfg = EdaConfig(
            T=opt.get("models", 100, int),
            B=opt.get("elite", 50, int),
            alpha_init=opt.get("alpha_init", 0.05, float),
            restarts=opt.get("restarts", 20, int),
            eval_folds=opt.get("folds", 10, int),
            max_iterations=opt.get("max_iterations", 100, int),
        )
        alpha, report = eda_rank(data, learner, cfg, rng.stream(seed, "baseline", "eda"))
        best = report.best_restart
        _say(f"best restart {best}: stopped after {report.stop_iterations[best]} "
             f"iterations, population error {report.final_population_errors[best]:.6f}")
        rows.append(pio.ReportRow(run_id, seed, method, learner.kind, label,
                                  "stop_iterations", report.stop_iterations[best]))
        rows.append(pio.ReportRow(run_id, seed, method, learner.kind, label,
                                  "cv_error", report.final_population_errors[best]))
        if relevant is not None:
            rows.append(pio.ReportRow(run_id, seed, method, learner.kind, label, "aupr",
                                      aupr(rank_features(alpha), relevant,
                                           n_items=data.n_features)))
        if alpha_out is not None:
            pio.write_alpha(alpha_out, alpha)
    else:
        raise ValueError(f"unknown method {method!r}")

    if metrics_out is not None:
        pio.write_report(metrics_out, rows)
    return 0


def cmd_grn(opt: Options) -> int:
    seed = opt.get("seed", 0, int)
    edges_out = opt.get("edges_out")
    if edges_out is None:
        raise ValueError("--edges-out is required")
    expression_path = opt.get("expression")
    if expression_path is None:
        raise ValueError("--expression is required")
    if not os.path.exists(expression_path):
        raise FileNotFoundError(f"expression file not found: {expression_path}")
    matrix, names = pio.read_matrix(expression_path)
    if not opt.get_bool("no_normalize"):
        sd = matrix.std(axis=0)
        matrix = (matrix - matrix.mean(axis=0)) / np.where(sd == 0.0, 1.0, sd)

    reg_path = opt.get("regulators")
    if reg_path is None:
        regulators = np.arange(matrix.shape[1])
    else:
        lookup = {name: i for i, name in enumerate(names)}
        regulators = []
        with open(reg_path, encoding="utf-8") as fh:
            for line in fh:
                token = line.strip()
                if not token:
                    continue
                if token in lookup:
                    regulators.append(lookup[token])
                elif token.isdigit():
                    regulators.append(int(token))
                else:
                    raise ValueError(f"unknown regulator {token!r} (not a gene "
                                     f"name from the header or an index)")
        regulators = np.asarray(regulators, dtype=np.int64)

    gold = None
    gold_path = opt.get("gold")
    if gold_path is not None:
        gold = pio.resolve_edge_names(pio.read_edges(gold_path), names)

    problem = GrnProblem(matrix, regulators, gold_edges=gold, names=names)
    learner = _learner_from(opt)
    cfg = _train_config(opt, seed)
    grid_text = opt.get("lambda_grid")
    grid = (DEFAULT_LAMBDA_GRID if grid_text is None
            else [float(t) for t in grid_text.split(",")])

    if len(set(grid)) == 1:
        chosen = float(next(iter(grid)))
    else:
        chosen = lambda_sweep(problem, learner, cfg, grid)
    _say(f"lambda: {chosen}")
    alpha, ranking = grn_train(problem, learner, cfg, chosen)
    pio.write_edges(edges_out, ranking, names)

    rows = [pio.ReportRow(f"grn-s{seed}", seed, "prsb", learner.kind,
                          os.path.basename(expression_path), "chosen_lambda", chosen),
            pio.ReportRow(f"grn-s{seed}", seed, "prsb", learner.kind,
                          os.path.basename(expression_path), "mean_alpha_sum",
                          float(alpha.sum(axis=0).mean()))]
    if gold:
        score = aupr(ranking.items(), gold, n_items=len(ranking))
        _say(f"edge AUPR: {score:.4f} (prevalence "
             f"{len(gold) / len(ranking):.4f})")
        rows.append(pio.ReportRow(f"grn-s{seed}", seed, "prsb", learner.kind,
                                  os.path.basename(expression_path), "aupr", score))
    metrics_out = opt.get("metrics_out")
    if metrics_out is not None:
        pio.write_report(metrics_out, rows)
    return 0


def cmd_bench(opt: Options) -> int:
    out_dir = opt.get("out_dir")
    if out_dir is None:
        raise ValueError("--out-dir is required")
    suite = opt.get("suite", "simulated")
    if suite != "simulated":
        raise ValueError(f"unknown suite {suite!r}")
    seeds = _parse_seeds(opt.get("seeds", "0..9"))
    problems = [t for t in opt.get("problems", ",".join(PROBLEM_KINDS)).split(",") if t]
    methods = [t for t in opt.get("methods", ",".join(bench_mod.METHODS)).split(",") if t]
    learners = [t for t in opt.get("learners", ",".join(bench_mod.LEARNERS)).split(",") if t]
    cfg = _train_config(opt, 0)
    n_jobs = _max_workers(opt.get("jobs", 1, int))

    os.makedirs(out_dir, exist_ok=True)
    rows = bench_mod.run_suite(out_dir, problems, methods, learners, seeds, cfg,
                               cv_folds=opt.get("folds", 10, int), n_jobs=n_jobs,
                               progress=_say)
    pio.write_report(os.path.join(out_dir, "report.csv"), rows)
    summary = bench_mod.summarize(rows)
    bench_mod.write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
    table = bench_mod.render_table(summary)
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prsb",
        description="Ensemble training on random feature subsets with learned "
                    "selection probabilities.",
        epilog="Config files hold key=value lines using the long flag names; "
               "command-line flags win over config values.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a benchmark problem to CSV files")
    p.add_argument("--problem", choices=list(PROBLEM_KINDS), required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-train", help="training rows (default 300)")
    p.add_argument("--n-test", help="test rows (default 500)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="optimize selection probabilities")
    _add_data_flags(p)
    _add_learner_flags(p)
    _add_trainer_flags(p)
    p.add_argument("--loss", choices=[MSE, CROSS_ENTROPY],
                   help="override the task's default loss")
    p.add_argument("--alpha-out", help="output: one probability per line")
    p.add_argument("--report-out", help="output: training report JSON")
    p.add_argument("--metrics-out", help="output: metric rows CSV (needs --test)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", help="reference methods")
    p.add_argument("--method", choices=["single", "rsb", "eda"], required=True)
    _add_data_flags(p)
    _add_learner_flags(p)
    p.add_argument("--models", help="ensemble/population size T (default 100)")
    p.add_argument("--folds", help="cross-validation folds (default 10)")
    p.add_argument("--k-grid", help="comma-separated K candidates (rsb)")
    p.add_argument("--elite", help="elite size B (eda, default 50)")
    p.add_argument("--alpha-init", help="initial probability (eda, default 0.05)")
    p.add_argument("--restarts", help="restarts (eda, default 20)")
    p.add_argument("--max-iterations", help="iteration cap (eda, default 100)")
    p.add_argument("--alpha-out", help="output: probabilities (rsb/eda)")
    p.add_argument("--metrics-out", help="output: metric rows CSV")
    _add_common_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("grn", help="network inference over an expression matrix")
    p.add_argument("--expression", help="samples x genes table with gene-name header")
    p.add_argument("--regulators", help="candidate regulator names/indices, one per line")
    p.add_argument("--gold", help="known edges TSV: regulator<TAB>target<TAB>{0,1}")
    p.add_argument("--lambda-grid", help="comma-separated penalties to sweep "
                                         "(default 0,0.002,0.005,0.007,0.01,0.015)")
    p.add_argument("--edges-out", help="output: ranked edges TSV")
    p.add_argument("--metrics-out", help="output: metric rows CSV")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip per-gene standardization")
    _add_learner_flags(p)
    _add_trainer_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_grn)

    p = sub.add_parser("bench", help="benchmark sweep with per-seed checkpoints")
    p.add_argument("--suite", choices=["simulated"], help="cell family (default simulated)")
    p.add_argument("--out-dir", help="checkpoint and report directory")
    p.add_argument("--seeds", help="'0..9' or '0,3,7' (default 0..9)")
    p.add_argument("--problems", help="comma-separated problem subset")
    p.add_argument("--methods", help="comma-separated subset of single,rsb,prsb")
    p.add_argument("--learners", help="comma-separated subset of tree,knn")
    p.add_argument("--folds", help="rsb cross-validation folds (default 10)")
    _add_trainer_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config) if getattr(args, "config", None) else {}
        opt = Options(args, config)
        return args.func(opt)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (pio.ParseError, OSError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
