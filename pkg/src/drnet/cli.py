"""``drnet`` command line: gen-data, train, eval, gradcheck, reproduce.

Exit codes: 0 success, 2 usage or domain error, 3 I/O error, 4 numeric
failure (divergence, failed gradient check, too many failed cells).
Metrics go to stdout as one JSON line; tables go to stderr unless
``--pretty`` is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import backend
from .data import CapacityError, Dataset, TaskKind, generate_equality_dataset, generate_task_dataset, stratified_split
from .experiments import ExperimentPlan, emit_results, render_table, run_plan
from .network import (
    DivergenceError,
    Network,
    NetworkSpec,
    TrainConfig,
    build_network,
    evaluate,
    gradient_check,
    train,
)
from .tensor import Rng, ShapeError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
GRADCHECK_TOL = 1e-4
MIN_COMPLETION = 0.9
OUT_DIR_ENV = "DRNET_OUT_DIR"

# keys a --config file may set; flags override them, they override defaults
CONFIG_KEYS = {"epochs", "lr", "batch_size", "beta1", "beta2", "eps", "shuffle",
               "hidden_sizes", "init", "reps", "seed", "n", "task_size", "size", "train_fraction"}
TRAIN_KEYS = ("epochs", "lr", "batch_size", "beta1", "beta2", "eps", "shuffle")

# study name -> list of (output stem, plans)
REPRODUCE = {
    "table1": [("table1", ["dim_sweep"])],
    "fig2": [("fig2", ["datasize_sweep"])],
    "coverage": [("coverage", ["coverage"])],
    "table2": [("table2", ["coverage", "other_tasks"])],
}
REPRODUCE["all"] = REPRODUCE["table1"] + REPRODUCE["fig2"] + REPRODUCE["table2"]

log = logging.getLogger("drnet")


class UsageError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _batch(text):
    if text.lower() in ("full", "none"):
        return "full"
    return _positive_int(text)


def _epsilon(text):
    value = float(text)
    if not 1e-7 <= value <= 1e-3:
        raise argparse.ArgumentTypeError("epsilon must lie in [1e-7, 1e-3]")
    return value


def _add_common(p, seed_help="random seed (default 0)"):
    p.add_argument("--seed", type=_nonneg_int, help=seed_help)
    p.add_argument("--config", metavar="FILE", help="JSON file with defaults; flags take precedence")
    p.add_argument("--pretty", action="store_true", help="print a readable table instead of the JSON line")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_train_flags(p):
    p.add_argument("--epochs", type=_nonneg_int, help="training epochs (default 20)")
    p.add_argument("--lr", type=_positive_float, help="Adam learning rate (default 0.5)")
    p.add_argument("--batch-size", type=_batch, dest="batch_size",
                   help="mini-batch size, or 'full' for full-batch (default full)")
    p.add_argument("--hidden", type=_positive_int, nargs="+", dest="hidden_sizes", metavar="H",
                   help="hidden layer widths (default 10)")
    p.add_argument("--init", choices=["he_xavier", "torch"], help="weight initialisation (default he_xavier)")
    p.add_argument("--backend", choices=["auto", "c", "python"], help="training kernel (default auto)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drnet", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog=f"Default output directory: ${OUT_DIR_ENV} or ./results")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    tasks = [t.value for t in TaskKind]

    p = sub.add_parser("gen-data", help="generate a labelled pair dataset")
    p.add_argument("--task", required=True, choices=tasks, help="relation to label")
    p.add_argument("--n", type=_positive_int, help="vector length")
    p.add_argument("--size", type=_positive_int,
                   help="pairs to draw for non-equality tasks (default 64; equality sizes itself)")
    p.add_argument("--out", metavar="FILE", help="dataset path (default <out-dir>/<task>_n<n>_s<seed>.txt)")
    p.add_argument("--out-dir", metavar="DIR", help="directory for the default output path")
    _add_common(p)

    p = sub.add_parser("train", help="train one network on a dataset file")
    p.add_argument("--data", required=True, metavar="FILE", help="dataset file from gen-data")
    p.add_argument("--test", metavar="FILE",
                   help="separate test dataset; without it --data is split stratified")
    p.add_argument("--train-fraction", type=float, dest="train_fraction",
                   help="fraction of --data used for training when --test is absent (default 0.75)")
    p.add_argument("--arch", required=True, choices=["plain", "early", "mid"], help="architecture")
    _add_train_flags(p)
    p.add_argument("--model-out", metavar="FILE", help="model path (default <out-dir>/model_<arch>.json)")
    p.add_argument("--out-dir", metavar="DIR", help="directory for the default model path")
    _add_common(p, "seed for the split, initialisation and shuffling (default 0)")

    p = sub.add_parser("eval", help="accuracy of a saved model on a dataset file")
    p.add_argument("--model", required=True, metavar="FILE", help="model file from train")
    p.add_argument("--data", required=True, metavar="FILE", help="dataset file")
    p.add_argument("--pretty", action="store_true", help="print a readable line instead of JSON")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--arch", required=True, choices=["plain", "early", "mid"], help="architecture")
    p.add_argument("--n", type=_positive_int, required=True, help="vector length")
    p.add_argument("--epsilon", type=_epsilon, default=1e-5, help="difference step in [1e-7, 1e-3] (default 1e-5)")
    p.add_argument("--samples", type=_positive_int, default=4, help="random pairs to check (default 4)")
    p.add_argument("--hidden", type=_positive_int, nargs="+", dest="hidden_sizes", metavar="H",
                   help="hidden layer widths (default 10)")
    p.add_argument("--seed", type=_nonneg_int, default=0, help="seed for weights and pairs (default 0)")
    p.add_argument("--pretty", action="store_true", help="print PASS/FAIL text instead of JSON")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = sub.add_parser("reproduce", help="run a study grid and write CSV and JSON results")
    p.add_argument("study", choices=list(REPRODUCE), help="which study to run")
    p.add_argument("--reps", type=_positive_int, help="seeds per cell (default 10)")
    p.add_argument("--dims", type=_positive_int, nargs="+", help="vector lengths for table1")
    p.add_argument("--fractions", type=float, nargs="+", help="training fractions for fig2")
    p.add_argument("--workers", type=_positive_int, default=1, help="worker processes (default 1)")
    p.add_argument("--out-dir", metavar="DIR", help="output directory")
    _add_train_flags(p)
    _add_common(p, "base seed; cell seeds are seed..seed+reps-1 (default 0)")
    return parser


# -- helpers --------------------------------------------------------------------


def _settings(args) -> dict:
    """Merge defaults < config file < flags."""
    merged = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(doc) - CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(doc)
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if merged.get("batch_size") in ("full", None):
        merged["batch_size"] = None
    return merged


def _train_config(s: dict) -> TrainConfig:
    return TrainConfig(**{k: s[k] for k in TRAIN_KEYS if k in s}, seed=s.get("seed", 0))


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "results")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(metrics: dict, pretty: bool, table: str) -> None:
    if pretty:
        sys.stdout.write(table)
    else:
        print(json.dumps(metrics, sort_keys=True))
        sys.stderr.write(table)


# -- subcommands ------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    s = _settings(args)
    task = TaskKind.parse(args.task)
    seed = s.get("seed", 0)
    if "n" not in s:
        raise UsageError("--n is required")
    n = int(s["n"])
    rng = Rng(seed, "gen-data", task.value)
    header = {}
    if task is TaskKind.EQUALITY:
        ds = generate_equality_dataset(n, rng)
    else:
        size = int(s.get("size", 64))
        ds = generate_task_dataset(task, n, size, rng)
        header["size"] = size
    ds.seed = seed
    path = Path(args.out) if args.out else _out_dir(args) / f"{task.value}_n{n}_s{seed}.txt"
    _write(path, ds.dumps(**header))
    counts = ds.class_counts()
    metrics = {"path": str(path), "task": task.value, "n": n, "seed": seed, "pairs": len(ds),
               "positive": int(counts[1]), "negative": int(counts[0])}
    _emit(metrics, args.pretty, f"{path}: {len(ds)} pairs ({counts[1]} positive, {counts[0]} negative)\n")
    return EXIT_OK


def cmd_train(args) -> int:
    s = _settings(args)
    cfg = _train_config(s)
    data = Dataset.load(args.data)
    if args.test:
        train_ds, test_ds = data, Dataset.load(args.test)
        if test_ds.n != data.n:
            raise UsageError("train and test datasets have different vector lengths")
    else:
        frac = float(s.get("train_fraction", 0.75))
        train_ds, test_ds = stratified_split(data, frac, Rng(cfg.seed, "split"))
    hidden = tuple(s.get("hidden_sizes", (10,)))
    init = s.get("init", "he_xavier")
    spec = NetworkSpec(args.arch, data.n, hidden)
    net = build_network(spec, Rng(cfg.seed, "init", spec.fusion.value), init=init)
    effective = {"arch": args.arch, "data": args.data, "test": args.test,
                 "train_fraction": None if args.test else float(s.get("train_fraction", 0.75)),
                 "hidden_sizes": list(hidden), "init": init, **cfg.to_dict()}
    try:
        _, result = train(net, train_ds, cfg, test_ds, kernel=args.backend)
    except DivergenceError as exc:
        print(json.dumps({"error": str(exc), "config": effective}, sort_keys=True))
        return EXIT_NUMERIC
    path = Path(args.model_out) if args.model_out else _out_dir(args) / f"model_{args.arch}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    net.save(path, seed=cfg.seed, config=effective)
    metrics = {"arch": args.arch, "n": data.n, "epochs": cfg.epochs, "train_size": len(train_ds),
               "test_size": len(test_ds), "train_accuracy": result.train_accuracy,
               "test_accuracy": result.test_accuracy,
               "final_loss": result.epoch_losses[-1] if result.epoch_losses else None,
               "model": str(path)}
    table = (f"{args.arch}: train {result.train_accuracy:.4f}  test {result.test_accuracy:.4f}"
             f"  ({len(train_ds)}/{len(test_ds)} pairs, {cfg.epochs} epochs) -> {path}\n")
    _emit(metrics, args.pretty, table)
    return EXIT_OK


def cmd_eval(args) -> int:
    net = Network.load(args.model)
    ds = Dataset.load(args.data)
    acc = evaluate(net, ds)
    metrics = {"model": args.model, "data": args.data, "size": len(ds), "accuracy": acc}
    _emit(metrics, args.pretty, f"accuracy {acc:.4f} on {len(ds)} pairs\n")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    hidden = tuple(args.hidden_sizes or (10,))
    rng = Rng(args.seed, "gradcheck")
    net = build_network(NetworkSpec(args.arch, args.n, hidden), rng.child("init"))
    worst = 0.0
    for k in range(args.samples):
        v = rng.bits(args.n)
        w = v.copy() if k % 2 else rng.bits(args.n)
        x = np.concatenate([v, w]).astype(np.float64)
        worst = max(worst, gradient_check(net, x, args.epsilon, label=int(np.array_equal(v, w))))
    ok = worst < GRADCHECK_TOL
    status = "PASS" if ok else "FAIL"
    metrics = {"arch": args.arch, "n": args.n, "epsilon": args.epsilon, "samples": args.samples,
               "max_rel_error": worst, "tolerance": GRADCHECK_TOL, "status": status}
    _emit(metrics, args.pretty, f"{status} {args.arch} n={args.n}: max relative error {worst:.3e}\n")
    return EXIT_OK if ok else EXIT_NUMERIC


def _plan(study: str, s: dict, args) -> list[ExperimentPlan]:
    cfg = replace(_train_config(s), seed=0)
    kw = {"reps": int(s.get("reps", 10)), "base_seed": int(s.get("seed", 0)), "train": cfg,
          "hidden_sizes": tuple(s.get("hidden_sizes", (10,))), "init": s.get("init", "he_xavier")}
    settings = ()
    if study == "dim_sweep" and args.dims:
        settings = tuple(args.dims)
    if study == "datasize_sweep" and args.fractions:
        settings = tuple(args.fractions)
    if study == "other_tasks" and "task_size" in s:
        kw["task_size"] = int(s["task_size"])
    return ExperimentPlan(study, settings, **kw)


def _commented(text: str, configs: list[dict]) -> str:
    head = "".join(f"# config {json.dumps(c, sort_keys=True)}\n" for c in configs)
    return head + text


def cmd_reproduce(args) -> int:
    s = _settings(args)
    if args.backend:
        os.environ[backend.ENV_VAR] = args.backend
    out_dir = _out_dir(args)
    summary, worst = [], 1.0
    for stem, studies in REPRODUCE[args.study]:
        grids = []
        for study in studies:
            plan = _plan(study, s, args)
            start = time.perf_counter()
            grid = run_plan(plan, workers=args.workers)
            log.info("%s finished in %.1fs", study, time.perf_counter() - start)
            grids.append(grid)
            table = f"== {stem}: {study} ==\n{render_table(grid)}"
            (sys.stdout if args.pretty else sys.stderr).write(table)
        configs = [g.plan.config() for g in grids]
        csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
        _write(csv_path, _commented(emit_results(grids, "csv"), configs))
        _write(json_path, emit_results(grids, "json"))
        completion = sum(len(g.cells) * g.completion for g in grids) / sum(len(g.cells) for g in grids)
        worst = min(worst, completion)
        summary.append({"name": stem, "csv": str(csv_path), "json": str(json_path),
                        "rows": sum(len(g.cells) for g in grids), "completion": completion})
    if not args.pretty:
        print(json.dumps({"study": args.study, "outputs": summary}, sort_keys=True))
    if worst < MIN_COMPLETION:
        log.error("only %.0f%% of cells completed", worst * 100)
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"drnet: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, CapacityError, ShapeError, ValueError, TypeError) as exc:
        print(f"drnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"drnet: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FloatingPointError as exc:
        print(f"drnet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
