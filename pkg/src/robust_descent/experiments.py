"""Experiment configuration, seeded (method x trial) cells and tidy CSV output.

Results contract (``results.csv``, one row per method/trial/iteration):

==================  ==========================================================
experiment          config kind: controlled, regression or classify
method              method name as listed in the config
trial               0-based trial index
iteration           controlled: update index t; regression: gradient
                    evaluations spent (0 for closed-form fits); classify:
                    cumulative gradient evaluations
excess_emp_risk     mean training loss minus its value at the empirical
                    minimiser (NaN for classify)
excess_true_risk    R(w) - R(w*) (NaN for classify)
dist_to_wstar       ||w - w*|| (NaN for classify)
test_metric         regression: excess test RMSE; classify: test error
                    rate; controlled: NaN
==================  ==========================================================

Floats are written with ``repr`` so the file round-trips exactly. Run
timestamps live only in ``meta.json``.
"""

from __future__ import annotations

import csv
import json
import math
import time
import traceback
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import geomed_of_ols, lad_fit, mom_gradient, ols_analytic, sgd_run, svrg_run
from .datasets import DatasetFile, balanced_subsample, load_csv_dataset, minmax_scale
from .models import LogisticTask
from .rgd import (
    RgdConfig,
    StepSchedule,
    VarianceBoundPolicy,
    descent,
    oracle_run,
    perturbed_init,
    rgd_run,
    uniform_init,
)
from .synthdata import (
    METRICS,
    NoiseSpec,
    TrialRecord,
    excess_test_rmse,
    gen_noisy_quadratic,
    gen_regression,
    level_sd,
    noise_at_level,
)

KINDS = ("controlled", "regression", "classify")
METHODS = {
    "controlled": ("oracle", "erm", "rgdmult", "mom"),
    "regression": ("ols", "lad", "geomed", "erm", "rgdmult"),
    "classify": ("rgdmult", "sgd", "svrg", "erm"),
}
COLUMNS = ("experiment", "method", "trial", "iteration", *METRICS)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to rerun an experiment bit for bit.

    ``noise`` is ``{"family": ..., "level": 1..15}`` or ``{"family": ...,
    "params": {...}}``. ``method_params`` maps a method name to overrides of
    ``step``, ``delta``, ``variance_multiplier`` and method-specific keys
    (``k`` for mom, ``minibatch``/``coord_subset`` for rgdmult, ``inner``
    for svrg). ``budget_multiplier`` sets the gradient-evaluation budget to
    that many multiples of ``n`` for regression and classify; controlled runs
    use ``n_iter`` full-gradient updates.
    """

    kind: str = "controlled"
    methods: list = field(default_factory=lambda: ["oracle", "erm", "rgdmult"])
    method_params: dict = field(default_factory=dict)
    n: int = 500
    d: int = 2
    noise: dict = field(default_factory=lambda: {"family": "normal", "level": 15})
    trials: int = 10
    n_iter: int = 250
    budget_multiplier: int = 40
    step: float = 0.01
    delta: float = 0.005
    variance_multiplier: float = 0.5
    init_delta: float = 5.0
    test_size: int = 1000
    input_var: float = 1.0
    dataset: str | None = None
    label_column: str = "label"
    train_per_class: int = 100
    test_per_class: int = 100
    reg: float = 0.001
    out: str = "results"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not self.methods:
            raise ConfigError("no methods listed")
        unknown = [m for m in self.methods if m not in METHODS[self.kind]]
        if unknown:
            raise ConfigError(f"methods {unknown} are not available for {self.kind!r}; "
                              f"choose from {METHODS[self.kind]}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate method names")
        stray = set(self.method_params) - set(self.methods)
        if stray:
            raise ConfigError(f"method_params given for unlisted methods {sorted(stray)}")
        for name in ("n", "d", "trials", "n_iter", "budget_multiplier", "test_size",
                     "train_per_class", "test_per_class"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        for name in ("step", "variance_multiplier", "init_delta", "input_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.reg < 0:
            raise ConfigError("reg must be non-negative")
        if self.kind != "classify":
            try:
                self.noise_spec()
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad noise setting {self.noise!r}: {exc}") from None

    def noise_spec(self) -> NoiseSpec:
        fam = self.noise["family"]
        if "level" in self.noise:
            return noise_at_level(fam, int(self.noise["level"]), **self.noise.get("shape", {}))
        return NoiseSpec(fam, dict(self.noise["params"]))

    def params_for(self, method: str) -> dict:
        base = {"step": self.step, "delta": self.delta, "variance_multiplier": self.variance_multiplier}
        return {**base, **self.method_params.get(method, {})}

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict):
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(text)


def data_seed(root: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root), int(trial)])


def method_seed(root: int, trial: int, method: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root), int(trial), zlib.crc32(method.encode())])


def _schedule(step):
    return StepSchedule.constant(float(step))


def _policy(p):
    return VarianceBoundPolicy(multiplier=float(p["variance_multiplier"]))


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# -- controlled --------------------------------------------------------------

def _controlled_cell(cfg: ExperimentConfig, method: str, trial: int) -> TrialRecord:
    d_rng = np.random.default_rng(data_seed(cfg.seed, trial))
    task_seed, init_seed = d_rng.spawn(2)
    cov = cfg.input_var * np.ones(cfg.d)
    task = gen_noisy_quadratic(cfg.n, cfg.d, cfg.noise_spec(), task_seed, cov=cov)
    w0 = perturbed_init(task.w_star, cfg.init_delta, init_seed)
    p = cfg.params_for(method)
    sched = _schedule(p["step"])
    mseed = method_seed(cfg.seed, trial, method)
    if method == "oracle":
        traj = oracle_run(task.risk_grad, w0, sched, cfg.n_iter)
    elif method == "erm":
        traj = descent(lambda w, t: task.grads(w).mean(axis=0), w0, sched, n_iter=cfg.n_iter)
    elif method == "mom":
        k = int(p.get("k", 10))
        rng = np.random.default_rng(mseed)
        traj = descent(lambda w, t: mom_gradient(task.grads(w), k, rng), w0, sched, n_iter=cfg.n_iter)
    else:
        rc = RgdConfig(delta=p["delta"], schedule=sched, policy=_policy(p), n_iter=cfg.n_iter,
                       seed=_int_seed(mseed))
        traj = rgd_run(task, rc, w0)
    w_emp = task.empirical_minimizer()
    base = task.losses(w_emp).mean()
    its = traj.iterates
    metrics = {
        "excess_emp_risk": [task.losses(w).mean() - base for w in its],
        "excess_true_risk": [task.excess_risk(w) for w in its],
        "dist_to_wstar": np.linalg.norm(its - task.w_star, axis=1),
    }
    return TrialRecord(trial, _int_seed(mseed), method, np.arange(len(its)), metrics)


# -- regression --------------------------------------------------------------

def _regression_cell(cfg: ExperimentConfig, method: str, trial: int) -> TrialRecord:
    task = gen_regression(cfg.n, cfg.d, cfg.noise_spec(), data_seed(cfg.seed, trial),
                          m=cfg.test_size, input_var=cfg.input_var)
    p = cfg.params_for(method)
    mseed = method_seed(cfg.seed, trial, method)
    budget = cfg.budget_multiplier * cfg.n
    X, y = task.X, task.y
    w_ols = ols_analytic(X, y)
    spent = 0
    if method == "ols":
        w = w_ols
    elif method == "geomed":
        w = geomed_of_ols(X, y, seed=np.random.default_rng(mseed))
    elif method == "lad":
        w = lad_fit(X, y, budget)
        spent = (budget // cfg.n) * cfg.n
    else:
        sched = _schedule(p["step"])
        if method == "erm":
            traj = descent(lambda w, t: task.grads(w).mean(axis=0), w_ols, sched,
                           max_evals=budget, evals_per_step=cfg.n)
        else:
            rc = RgdConfig(delta=p["delta"], schedule=sched, policy=_policy(p), max_evals=budget,
                           seed=_int_seed(mseed))
            traj = rgd_run(task, rc, w_ols)
        w, spent = traj.final, int(traj.evals[-1])
    metrics = {
        "excess_emp_risk": [task.losses(w).mean() - task.losses(w_ols).mean()],
        "excess_true_risk": [task.excess_risk(w)],
        "dist_to_wstar": [float(np.linalg.norm(w - task.w_star))],
        "test_metric": [excess_test_rmse(w, task.w_star, task.X_test, task.y_test)],
    }
    return TrialRecord(trial, _int_seed(mseed), method, [spent], metrics)


# -- classify ----------------------------------------------------------------

def synthetic_classes(n_per_class: int, F: int, C: int, seed, sep: float = 1.5):
    """Gaussian class clouds with heavy-tailed (Student-t, 3 df) feature noise."""
    rng = np.random.default_rng(seed)
    centers = sep * rng.standard_normal((C, F))
    X = np.vstack([centers[c] + rng.standard_t(3.0, (n_per_class, F)) for c in range(C)])
    y = np.repeat(np.arange(C), n_per_class)
    return X, y


def _load_classify(cfg: ExperimentConfig, trial: int):
    if cfg.dataset is None:
        per = cfg.train_per_class + cfg.test_per_class
        X, y = synthetic_classes(per, cfg.d, 2, np.random.SeedSequence([cfg.seed, 2**31 - 1]))
        ds = DatasetFile(minmax_scale(X), y, [f"x{j}" for j in range(cfg.d)], "label", np.arange(2))
    else:
        ds = load_csv_dataset(cfg.dataset, cfg.label_column, "class")
    return ds, balanced_subsample(ds, cfg.train_per_class, cfg.test_per_class,
                                  np.random.default_rng(data_seed(cfg.seed, trial)))


def _checkpoints(traj, grid):
    # Last iterate whose cumulative cost does not exceed each checkpoint.
    pos = np.searchsorted(traj.evals, grid, side="right") - 1
    return traj.iterates[pos]


def _classify_cell(cfg: ExperimentConfig, method: str, trial: int) -> TrialRecord:
    ds, (train, test) = _load_classify(cfg, trial)
    C = len(ds.classes)
    task = LogisticTask(train.X, train.y, C, reg=cfg.reg, X_test=test.X, labels_test=test.y)
    p = cfg.params_for(method)
    mseed = method_seed(cfg.seed, trial, method)
    rng = np.random.default_rng(mseed)
    w0 = uniform_init(task.d, rng)
    run_seed = int(rng.integers(0, 2**32))
    n = task.n
    budget = cfg.budget_multiplier * n
    step = float(p["step"])
    if method == "sgd":
        traj = sgd_run(task, w0, step, budget, seed=run_seed)
    elif method == "svrg":
        traj = svrg_run(task, w0, step, budget, seed=run_seed, inner=p.get("inner"))
    elif method == "erm":
        traj = descent(lambda w, t: task.grads(w).mean(axis=0), w0, _schedule(step),
                       max_evals=budget, evals_per_step=n)
    else:
        rc = RgdConfig(delta=p["delta"], schedule=_schedule(step), policy=_policy(p), max_evals=budget,
                       minibatch=p.get("minibatch"), coord_subset=p.get("coord_subset"), seed=run_seed)
        traj = rgd_run(task, rc, w0)
    grid = np.arange(0, budget + 1, n)
    its = _checkpoints(traj, grid)
    metrics = {"test_metric": [task.error_rate(w) for w in its]}
    return TrialRecord(trial, _int_seed(mseed), method, grid, metrics)


CELL_RUNNERS = {"controlled": _controlled_cell, "regression": _regression_cell, "classify": _classify_cell}


def run_cell(cfg: ExperimentConfig, method: str, trial: int) -> TrialRecord:
    return CELL_RUNNERS[cfg.kind](cfg, method, trial)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def record_rows(kind: str, rec: TrialRecord):
    for i, it in enumerate(rec.iterations):
        yield [kind, rec.method, str(rec.trial), str(int(it)), *(_fmt(rec.metrics[m][i]) for m in METRICS)]


def read_results(path) -> list[TrialRecord]:
    """Parse ``results.csv`` back into one :class:`TrialRecord` per cell."""
    cells: dict = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected results header {header}")
        for row in reader:
            key = (row[1], int(row[2]))
            cell = cells.setdefault(key, {"it": [], **{m: [] for m in METRICS}})
            cell["it"].append(int(row[3]))
            for m, v in zip(METRICS, row[4:]):
                cell[m].append(float(v))
    return [TrialRecord(t, -1, m, c["it"], {k: c[k] for k in METRICS}) for (m, t), c in cells.items()]


def _completed(path) -> set:
    if not path.exists():
        return set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return set()
        if tuple(header) != COLUMNS:
            raise ValueError(f"{path} has an unexpected header; refusing to append")
        return {(row[1], int(row[2])) for row in reader if row}


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> Path:
    """Run every (method, trial) cell not already present and write results.

    Cells are written in config order (method-major, then trial) regardless
    of ``threads``. A failing cell is logged in ``meta.json`` and skipped.
    Returns the path of ``results.csv``.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results = out / "results.csv"
    done = _completed(results)
    todo = [(m, t) for m in cfg.methods for t in range(cfg.trials) if (m, t) not in done]
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    failures = []
    fresh = not results.exists() or results.stat().st_size == 0

    def job(cell):
        m, t = cell
        try:
            return cell, run_cell(cfg, m, t), None
        except Exception as exc:  # a broken cell must not stop the run
            return cell, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"

    with results.open("a", newline="") as fh, ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(COLUMNS)
        # map() yields in submission order, so the single writer stays ordered.
        for (m, t), rec, err in pool.map(job, todo):
            if err is not None:
                failures.append({"method": m, "trial": t, "error": err})
                continue
            writer.writerows(record_rows(cfg.kind, rec))
            fh.flush()

    meta = {
        "version": __version__,
        "config": cfg.to_dict(),
        "defaults": {"delta": 0.005, "variance_multiplier": 0.5, "step": 0.01},
        "noise_sd_grid": [level_sd(k) for k in range(1, 16)],
        "columns": list(COLUMNS),
        "cells_run": len(todo) - len(failures),
        "cells_skipped": len(done),
        "failures": failures,
        "threads": threads,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if cfg.kind != "classify":
        spec = cfg.noise_spec()
        meta["noise"] = {"family": spec.family, "params": spec.params, "sd": spec.sd}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return results
