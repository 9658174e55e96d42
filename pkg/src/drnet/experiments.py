"""Study orchestration: dimension sweep, training-size sweep, vector coverage
and the other relation tasks, each over several seeds and all three
architectures, with CSV/JSON output."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import (
    TaskKind,
    build_coverage_dataset,
    generate_equality_dataset,
    generate_task_dataset,
    stratified_split,
    subsample_train,
)
from .network import (
    DivergenceError,
    Fusion,
    NetworkSpec,
    RunResult,
    TrainConfig,
    build_network,
    train,
)
from .tensor import Rng

log = logging.getLogger(__name__)

ARCHITECTURES = (Fusion.PLAIN, Fusion.EARLY, Fusion.MID)
DEFAULT_DIMS = (2, 3, 5, 10, 30, 100)
DEFAULT_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.20, 0.30, 0.40, 0.50)
COVERAGE_VARIANTS = ("a", "b")
OTHER_TASKS = {"c": TaskKind.NUMERIC_GE, "d": TaskKind.DIGIT_SUM_GE3, "e": TaskKind.DIGIT_REVERSAL}
STUDIES = ("dim_sweep", "datasize_sweep", "coverage", "other_tasks")
CSV_COLUMNS = ["study", "setting", "architecture", "seed_count", "mean_acc",
               "min_acc", "max_acc", "epochs", "config_hash", "note"]


@dataclass
class ExperimentPlan:
    study: str
    settings: tuple = ()
    reps: int = 10
    base_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_sizes: tuple[int, ...] = (10,)
    init: str = "he_xavier"
    n: int | None = None
    task_size: int = 64
    architectures: tuple[Fusion, ...] = ARCHITECTURES

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; choose from {STUDIES}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not self.settings:
            self.settings = {
                "dim_sweep": DEFAULT_DIMS,
                "datasize_sweep": DEFAULT_FRACTIONS,
                "coverage": COVERAGE_VARIANTS,
                "other_tasks": tuple(OTHER_TASKS),
            }[self.study]
        self.settings = tuple(self.settings)
        if self.study == "datasize_sweep" and not all(0 < f <= 0.75 for f in self.settings):
            raise ValueError("training fractions must lie in (0, 0.75]")
        if self.n is None:
            self.n = {"datasize_sweep": 10, "coverage": 10, "other_tasks": 3}.get(self.study)
        self.architectures = tuple(Fusion.parse(a) for a in self.architectures)
        self.hidden_sizes = tuple(self.hidden_sizes)

    def config(self) -> dict:
        """Everything that determines the results, in canonical form."""
        return {
            "study": self.study,
            "settings": [str(s) for s in self.settings],
            "reps": self.reps,
            "base_seed": self.base_seed,
            "train": {k: v for k, v in self.train.to_dict().items() if k != "seed"},
            "hidden_sizes": list(self.hidden_sizes),
            "init": self.init,
            "n": self.n,
            "task_size": self.task_size,
            "architectures": [a.value for a in self.architectures],
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class CellSummary:
    study: str
    setting: str
    architecture: str
    results: list[RunResult]

    @property
    def accuracies(self) -> list[float]:
        return [r.test_accuracy for r in self.results if r.ok]

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.results)

    @property
    def mean(self) -> float | None:
        acc = self.accuracies
        return float(np.mean(acc)) if acc else None

    @property
    def min(self) -> float | None:
        acc = self.accuracies
        return float(np.min(acc)) if acc else None

    @property
    def max(self) -> float | None:
        acc = self.accuracies
        return float(np.max(acc)) if acc else None

    @property
    def note(self) -> str:
        if not self.failures:
            return ""
        return f"{self.failures} of {len(self.results)} runs failed; excluded from the mean"


@dataclass
class ResultGrid:
    plan: ExperimentPlan
    cells: list[CellSummary]

    def cell(self, setting, architecture) -> CellSummary:
        arch = Fusion.parse(architecture).value
        for c in self.cells:
            if c.setting == str(setting) and c.architecture == arch:
                return c
        raise KeyError((setting, architecture))

    @property
    def completion(self) -> float:
        done = sum(c.mean is not None for c in self.cells)
        return done / len(self.cells) if self.cells else 1.0


# -- per-seed jobs -------------------------------------------------------------


def _datasets(plan: ExperimentPlan, setting, seed: int):
    rng = Rng(seed, "data", plan.study, str(setting))
    if plan.study == "dim_sweep":
        n = int(setting)
        return n, stratified_split(generate_equality_dataset(n, rng), 0.75, rng)
    if plan.study == "datasize_sweep":
        # the full dataset and test split depend on the seed only
        base = Rng(seed, "data", plan.study)
        ds = generate_equality_dataset(plan.n, base)
        train_ds, test_ds = stratified_split(ds, 0.75, base)
        return plan.n, (subsample_train(train_ds, float(setting), len(ds), rng), test_ds)
    if plan.study == "coverage":
        return plan.n, build_coverage_dataset(str(setting), plan.n, rng)
    task = OTHER_TASKS[str(setting)]
    ds = generate_task_dataset(task, plan.n, plan.task_size, rng)
    return plan.n, stratified_split(ds, 0.75, rng)


def run_job(plan: ExperimentPlan, setting, rep: int) -> list[RunResult]:
    """All architectures on one (setting, seed); they share the same split."""
    seed = plan.base_seed + rep
    n, (train_ds, test_ds) = _datasets(plan, setting, seed)
    cfg = replace(plan.train, seed=seed)
    out = []
    for arch in plan.architectures:
        spec = NetworkSpec(arch, n, plan.hidden_sizes)
        net = build_network(spec, Rng(seed, "init", arch.value), init=plan.init)
        try:
            _, result = train(net, train_ds, cfg, test_ds)
        except DivergenceError as exc:
            log.warning("%s %s %s seed %d diverged: %s", plan.study, setting, arch.value, seed, exc)
            result = exc.result
        out.append(result)
    return out


def _run_job_star(args):
    return run_job(*args)


def run_plan(plan: ExperimentPlan, workers: int = 1) -> ResultGrid:
    jobs = [(plan, s, r) for s in plan.settings for r in range(plan.reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_job_star, jobs))
    else:
        outputs = [run_job(*j) for j in jobs]
    cells = []
    for s in plan.settings:
        per_arch = {a: [] for a in plan.architectures}
        for (_, js, _), res in zip(jobs, outputs):
            if js == s:
                for a, r in zip(plan.architectures, res):
                    per_arch[a].append(r)
        for a in plan.architectures:
            cells.append(CellSummary(plan.study, str(s), a.value, per_arch[a]))
    return ResultGrid(plan, cells)


def run_dim_sweep(dims=DEFAULT_DIMS, reps=10, base_seed=0, workers=1, **kw) -> ResultGrid:
    return run_plan(ExperimentPlan("dim_sweep", tuple(dims), reps, base_seed, **kw), workers)


def run_datasize_sweep(n=10, fractions=DEFAULT_FRACTIONS, reps=10, base_seed=0, workers=1, **kw) -> ResultGrid:
    return run_plan(ExperimentPlan("datasize_sweep", tuple(fractions), reps, base_seed, n=n, **kw), workers)


def run_coverage_study(reps=10, base_seed=0, workers=1, n=10, **kw) -> ResultGrid:
    return run_plan(ExperimentPlan("coverage", COVERAGE_VARIANTS, reps, base_seed, n=n, **kw), workers)


def run_other_tasks(reps=10, base_seed=0, workers=1, n=3, **kw) -> ResultGrid:
    return run_plan(ExperimentPlan("other_tasks", tuple(OTHER_TASKS), reps, base_seed, n=n, **kw), workers)


# -- output ----------------------------------------------------------------------


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def to_csv(*grids: ResultGrid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for grid in grids:
        h = grid.plan.config_hash()
        for c in grid.cells:
            writer.writerow([c.study, c.setting, c.architecture, len(c.accuracies),
                             _fmt(c.mean), _fmt(c.min), _fmt(c.max),
                             grid.plan.train.epochs, h, c.note])
    return buf.getvalue()


def _run_record(r: RunResult) -> dict:
    # wall-clock time would make result files differ between identical runs
    doc = r.to_dict()
    del doc["duration"]
    return doc


def to_json(*grids: ResultGrid) -> str:
    docs = []
    for grid in grids:
        cells = []
        for c in grid.cells:
            cells.append({
                "study": c.study, "setting": c.setting, "architecture": c.architecture,
                "seed_count": len(c.accuracies), "mean_acc": c.mean, "min_acc": c.min,
                "max_acc": c.max, "epochs": grid.plan.train.epochs,
                "config_hash": grid.plan.config_hash(), "note": c.note,
                "runs": [_run_record(r) for r in c.results],
            })
        docs.append({"config": grid.plan.config(), "cells": cells})
    return json.dumps({"format": "drnet-results", "version": 1, "grids": docs}, indent=1) + "\n"


def emit_results(grids, fmt: str = "csv") -> str:
    if isinstance(grids, ResultGrid):
        grids = [grids]
    if fmt == "csv":
        return to_csv(*grids)
    if fmt == "json":
        return to_json(*grids)
    raise ValueError("format must be 'csv' or 'json'")


_ARCH_LABEL = {"plain": "Plain FFNN", "early": "Early Fusion", "mid": "Mid Fusion"}
_SETTING_LABEL = {
    "dim_sweep": lambda s: f"n={s}",
    "datasize_sweep": lambda s: f"{float(s) * 100:g}%",
    "coverage": lambda s: f"{s}) coverage",
    "other_tasks": lambda s: f"{s}) {OTHER_TASKS[s].value}",
}


def render_table(grid: ResultGrid) -> str:
    """Mean test accuracy as percentages: settings down, architectures across."""
    archs = [a.value for a in grid.plan.architectures]
    label = _SETTING_LABEL[grid.plan.study]
    rows = [["setting"] + [_ARCH_LABEL[a] for a in archs]]
    for s in grid.plan.settings:
        row = [label(str(s))]
        for a in archs:
            m = grid.cell(s, a).mean
            row.append("fail" if m is None else f"{round(m * 100):d}%")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for k, r in enumerate(rows):
        lines.append(" | ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i])
                                for i, c in enumerate(r)))
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# -- plan files ---------------------------------------------------------------------


def load_plan(path) -> ExperimentPlan:
    """Plan from a JSON file with keys study, dims | fractions | tasks | variants,
    reps, base_seed, n, task_size, hidden_sizes, init and ``train`` overrides."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return plan_from_dict(doc)


_STUDY_ALIASES = {"table1": "dim_sweep", "fig2": "datasize_sweep", "coverage": "coverage",
                  "tasks": "other_tasks"}


def plan_from_dict(doc: dict, train_overrides: dict | None = None) -> ExperimentPlan:
    study = _STUDY_ALIASES.get(doc["study"], doc["study"])
    settings = ()
    for key in ("dims", "fractions", "variants", "tasks", "settings"):
        if key in doc:
            settings = tuple(doc[key])
    train_cfg = dict(doc.get("train", {}))
    train_cfg.update(train_overrides or {})
    kw = {k: doc[k] for k in ("reps", "base_seed", "n", "task_size", "init") if k in doc}
    if "hidden_sizes" in doc:
        kw["hidden_sizes"] = tuple(doc["hidden_sizes"])
    if "architectures" in doc:
        kw["architectures"] = tuple(doc["architectures"])
    return ExperimentPlan(study, settings, train=TrainConfig(**train_cfg), **kw)


def is_finite_grid(grid: ResultGrid) -> bool:
    return all(all(math.isfinite(x) for x in r.epoch_losses) for c in grid.cells for r in c.results)
