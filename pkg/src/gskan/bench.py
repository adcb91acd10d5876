"""Experiment runner: seeded training runs, multi-seed suites, gradient checks, result tables."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import (
    Dataset,
    batch_iter,
    crossed_wave,
    gen_crossed_wave,
    load_csv,
    normalize,
    train_test_split,
)
from .network import Model, ModelSpec, build_model, count_params, model_backward, model_forward, save_checkpoint
from .optim import AdamHyper, AdamState, NonFiniteGradientError, accuracy, adam_step, mse_loss, softmax_cross_entropy

log = logging.getLogger(__name__)

TASKS = ("crossed_wave", "csv_regression", "csv_classification")
NORMALIZATIONS = ("none", "zscore", "minmax")


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


def _reject_unknown(d: dict, allowed, where: str):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class TaskConfig:
    name: str = "crossed_wave"
    n: int = 4096
    noise_std: float = 0.01
    test_fraction: float = 0.2
    data_seed: int = 0
    path: str | None = None
    target_columns: tuple = ("target",)
    header: bool = True

    def __post_init__(self):
        object.__setattr__(self, "target_columns", tuple(self.target_columns))
        if self.name not in TASKS:
            raise ConfigError(f"unknown task {self.name!r}; expected one of {TASKS}")
        if self.name != "crossed_wave" and not self.path:
            raise ConfigError(f"task {self.name!r} needs a CSV path")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")

    @property
    def is_classification(self) -> bool:
        return self.name == "csv_classification"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    task: TaskConfig = TaskConfig()
    epochs: int = 150
    batch_size: int = 64
    optimizer: AdamHyper = AdamHyper()
    seeds: tuple[int, ...] = (0, 1, 2)
    normalization: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _reject_unknown(d, [f.name for f in dataclasses.fields(cls)], "experiment config")
        if "model" not in d:
            raise ConfigError("experiment config needs a 'model' section")
        try:
            model = ModelSpec.from_dict(dict(d["model"]))
            task_d = dict(d.get("task", {}))
            _reject_unknown(task_d, [f.name for f in dataclasses.fields(TaskConfig)], "task")
            opt_d = dict(d.get("optimizer", {}))
            _reject_unknown(opt_d, [f.name for f in dataclasses.fields(AdamHyper)], "optimizer")
            rest = {k: v for k, v in d.items() if k not in ("model", "task", "optimizer")}
            return cls(model=model, task=TaskConfig(**task_d), optimizer=AdamHyper(**opt_d), **rest)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        d["task"]["target_columns"] = list(self.task.target_columns)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class RunResult:
    seed: int
    metric: str
    train_trace: list[float]
    test_trace: list[float]
    best_test: float
    best_epoch: int
    checkpoint: str | None = None
    wall_time: float = 0.0

    def to_dict(self, include_time: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if not include_time:
            del d["wall_time"]
        return d


def select_best(trace, metric: str) -> tuple[float, int]:
    """Best value of a per-epoch trace and its 1-indexed epoch (earliest on ties)."""
    arr = np.asarray(trace, dtype=np.float64)
    i = int(np.argmax(arr)) if metric == "accuracy" else int(np.argmin(arr))
    return float(arr[i]), i + 1


def load_task_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Train/test split for the configured task, normalized with train-only statistics."""
    task = config.task
    if task.name == "crossed_wave":
        ds = gen_crossed_wave(task.n, task.data_seed, task.noise_std)
    else:
        ds = load_csv(task.path, list(task.target_columns), task.header, labels=task.is_classification)
    train, test = train_test_split(ds, task.test_fraction, task.data_seed)
    train, (test,) = normalize(train, [test], config.normalization)
    return train, test


def _evaluate(model: Model, ds: Dataset, classification: bool) -> float:
    pred = model_forward(model, ds.X)[0]
    if classification:
        return accuracy(pred, ds.Y)
    return mse_loss(pred, ds.Y)[0]


def run_experiment(
    config: ExperimentConfig,
    seed: int,
    checkpoint_path=None,
    data: tuple[Dataset, Dataset] | None = None,
) -> RunResult:
    """Train one model from ``seed`` and evaluate the full test set after every epoch."""
    t0 = time.perf_counter()
    train, test = data if data is not None else load_task_data(config)
    classification = config.task.is_classification
    loss_fn = softmax_cross_entropy if classification else mse_loss
    metric = "accuracy" if classification else "mse"

    model = build_model(dataclasses.replace(config.model, seed=seed))
    state = AdamState.zeros(model.n_params)
    train_trace, test_trace = [], []
    for epoch in range(config.epochs):
        for b, batch in enumerate(batch_iter(train, config.batch_size, seed, epoch)):
            pred, caches = model_forward(model, batch.X)
            _, d_pred = loss_fn(pred, batch.Y)
            grad = model_backward(model, caches, d_pred)
            try:
                adam_step(model.theta, grad, state, config.optimizer)
            except NonFiniteGradientError as exc:
                raise TrainingError(f"seed {seed}, epoch {epoch + 1}, batch {b + 1}: {exc}") from exc
            model.project()
        train_trace.append(_evaluate(model, train, classification))
        test_trace.append(_evaluate(model, test, classification))
        log.debug("seed %d epoch %d: train %.4g test %.4g", seed, epoch + 1, train_trace[-1], test_trace[-1])

    best, best_epoch = select_best(test_trace, metric)
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    return RunResult(
        seed=seed,
        metric=metric,
        train_trace=train_trace,
        test_trace=test_trace,
        best_test=best,
        best_epoch=best_epoch,
        checkpoint=str(checkpoint_path) if checkpoint_path is not None else None,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class Aggregate:
    spec: ModelSpec
    metric: str
    seeds: list[int]
    best_tests: list[float]
    runs: list[RunResult] = field(default_factory=list, repr=False)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.best_tests)

    @property
    def std(self) -> float:
        """Sample standard deviation; 0 for a single seed (see ``single_seed``)."""
        return statistics.stdev(self.best_tests) if len(self.best_tests) > 1 else 0.0

    @property
    def single_seed(self) -> bool:
        return len(self.best_tests) == 1


def _run_one(args):
    config, seed, ckpt = args
    return run_experiment(config, seed, ckpt)


def run_suite(config: ExperimentConfig, workers: int = 1, checkpoint_dir=None) -> Aggregate:
    """One run per seed; seeds may run in parallel and are merged in seed order."""
    data = load_task_data(config) if workers <= 1 else None
    jobs = []
    for seed in config.seeds:
        ckpt = Path(checkpoint_dir) / f"seed{seed}.json" if checkpoint_dir is not None else None
        jobs.append((config, seed, ckpt))

    runs: list[RunResult] = []
    if workers <= 1:
        for cfg, seed, ckpt in jobs:
            try:
                runs.append(run_experiment(cfg, seed, ckpt, data=data))
            except Exception as exc:
                raise TrainingError(f"suite aborted: seed {seed} failed: {exc}") from exc
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, job) for job in jobs]
            for (_, seed, _), fut in zip(jobs, futures):
                try:
                    runs.append(fut.result())
                except Exception as exc:
                    raise TrainingError(f"suite aborted: seed {seed} failed: {exc}") from exc

    metric = runs[0].metric
    return Aggregate(config.model, metric, [r.seed for r in runs], [r.best_test for r in runs], runs)


def noise_floor_estimate(n: int, noise_std: float, seed: int) -> float:
    """MSE of the exact crossed-wave function against a fresh noisy sample."""
    ds = gen_crossed_wave(n, seed, noise_std)
    resid = ds.Y[:, 0] - crossed_wave(ds.X[:, 0], ds.X[:, 1])
    return float(np.mean(resid * resid))


# --- gradient checking -------------------------------------------------------

@dataclass
class GroupCheck:
    max_rel_error: float = 0.0
    checked: int = 0
    skipped: int = 0


@dataclass
class GradCheckReport:
    spec: ModelSpec
    tolerance: float
    step: float
    groups: dict[str, GroupCheck]

    @property
    def passed(self) -> bool:
        return all(g.max_rel_error <= self.tolerance for g in self.groups.values())

    def failing(self) -> list[str]:
        return [name for name, g in self.groups.items() if g.max_rel_error > self.tolerance]

    def format(self) -> str:
        lines = [f"grad-check {self.spec.kind} {list(self.spec.widths)} {self.spec.resolution} "
                 f"step={self.step:g} tol={self.tolerance:g}"]
        for name, g in self.groups.items():
            status = "ok" if g.max_rel_error <= self.tolerance else "FAIL"
            lines.append(f"  {name:<22} max_rel={g.max_rel_error:.3e} checked={g.checked} "
                         f"skipped={g.skipped}  {status}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def rel_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _probe_derivative(f: Callable[[float], float], x0: float, step: float, kink_tol: float):
    """Central difference at ``x0``, or None if the h and h/2 estimates disagree (kink/jump)."""
    full = (f(x0 + step) - f(x0 - step)) / (2 * step)
    half = (f(x0 + step / 2) - f(x0 - step / 2)) / step
    if rel_error(full, half) > kink_tol:
        return None
    return full


def grad_check(
    spec: ModelSpec,
    probe_batch_size: int = 4,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    seed: int = 0,
    kink_tol: float = 1e-5,
    grad_hook: Callable[[np.ndarray, Model], np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of ``0.5 * ||model(X)||^2`` with central differences.

    Every parameter slot and every input entry is checked.  Slots whose
    finite-difference probe straddles a kink or a domain-edge jump are skipped.
    ``grad_hook`` may rewrite the analytic gradient (used to test the harness).
    """
    model = build_model(spec)
    rng = np.random.default_rng(seed + 7919)
    lo, hi = spec.domain
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    X = rng.uniform(mid - 0.9 * half, mid + 0.9 * half, (probe_batch_size, spec.widths[0]))

    def loss_at(Xv):
        Y = model_forward(model, Xv)[0]
        return 0.5 * float(np.sum(Y * Y))

    Y, caches = model_forward(model, X)
    grad, dX = model_backward(model, caches, Y, return_input_grad=True)
    if grad_hook is not None:
        grad = grad_hook(grad.copy(), model)

    groups: dict[str, GroupCheck] = {}
    for name, (glo, ghi, _) in model.registry.items():
        gc = groups[name] = GroupCheck()
        for i in range(glo, ghi):
            orig = model.theta[i]

            def f(v, i=i):
                model.theta[i] = v
                return loss_at(X)

            num = _probe_derivative(f, orig, step, kink_tol)
            model.theta[i] = orig
            if num is None:
                gc.skipped += 1
                continue
            gc.checked += 1
            gc.max_rel_error = max(gc.max_rel_error, rel_error(grad[i], num))

    gc = groups["input"] = GroupCheck()
    for idx in np.ndindex(X.shape):
        def f(v, idx=idx):
            Xp = X.copy()
            Xp[idx] = v
            return loss_at(Xp)

        num = _probe_derivative(f, X[idx], step, kink_tol)
        if num is None:
            gc.skipped += 1
            continue
        gc.checked += 1
        gc.max_rel_error = max(gc.max_rel_error, rel_error(dX[idx], num))
    return GradCheckReport(spec, tolerance, step, groups)


# --- results emission ---------------------------------------------------------

RESULT_COLUMNS = (
    "model",
    "architecture",
    "resolution",
    "params",
    "metric",
    "best_test_mean",
    "best_test_std",
    "n_seeds",
    "seeds",
    "best_test_per_seed",
)


def aggregate_row(agg: Aggregate) -> dict:
    return {
        "model": agg.spec.kind,
        "architecture": "[" + ", ".join(str(w) for w in agg.spec.widths) + "]",
        "resolution": agg.spec.resolution,
        "params": count_params(agg.spec).total,
        "metric": agg.metric,
        "best_test_mean": agg.mean,
        "best_test_std": agg.std,
        "n_seeds": len(agg.seeds),
        "seeds": ";".join(str(s) for s in agg.seeds),
        "best_test_per_seed": ";".join(repr(v) for v in agg.best_tests),
    }


def emit_results(aggregates, fmt: str, path) -> Path:
    """Write one row per aggregate as CSV or JSON with a fixed column order."""
    if not aggregates:
        raise ValueError("no aggregates to emit")
    rows = [aggregate_row(a) for a in aggregates]
    path = Path(path)
    if fmt == "json":
        doc = {"columns": list(RESULT_COLUMNS), "rows": rows}
        path.write_text(json.dumps(doc, indent=2) + "\n")
    elif fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    else:
        raise ValueError(f"unknown results format {fmt!r}")
    return path


def read_results(path) -> list[dict]:
    """Parse a results file written by :func:`emit_results` back into typed rows."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            row["params"] = int(row["params"])
            row["n_seeds"] = int(row["n_seeds"])
            row["best_test_mean"] = float(row["best_test_mean"])
            row["best_test_std"] = float(row["best_test_std"])
            rows.append(row)
    return rows
