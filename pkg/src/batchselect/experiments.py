"""Configuration-driven experiment harness: the two regret studies and the
lower-bound ratio study, with deterministic seeded trials and CSV output."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .env import (
    derive_seed,
    dirichlet_behavior,
    make_gaussian_instance,
    make_tabular_instance,
    sample_dataset,
    sample_states,
)
from .features import design_matrix, realizable_family, truncation_family
from .hard_instance import ALGORITHMS, RatioResult, ratio_experiment
from .learner import (
    MAX_DELTA,
    GreedyPolicy,
    OptimalPolicy,
    PessimisticPolicy,
    fit_pessimistic,
)
from .linalg import ridge_fit
from .selection import complexity_coverage_policy, holdout_select, slope_policy_select
from .diagnostics import regret_estimate


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration field."""


@dataclass(frozen=True)
class CcSettings:
    state_count: int = 20
    action_count: int = 10
    hidden_dims: tuple = (2, 5, 10, 25, 50)


@dataclass(frozen=True)
class AcSettings:
    ambient_dim: int = 100
    true_dim: int = 30
    action_count: int = 10
    dims: tuple = (15, 20, 30, 50, 75, 100)
    holdout_split: float = 0.8


@dataclass(frozen=True)
class LowerBoundSettings:
    n1: tuple = (16, 1024, 65536)
    n2: int = 16
    algorithms: tuple = ("cc", "slope", "holdout")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    trials: int = 20
    n_grid: tuple = (100, 250, 500, 1000, 2000, 4000)
    n_test: int = 500
    n_validation: int = 500
    delta: float = 0.05
    lam: float = 1.0
    penalty_scale: float = 0.1
    seed: int = 0
    cc: CcSettings = field(default_factory=CcSettings)
    ac: AcSettings = field(default_factory=AcSettings)
    lower_bound: LowerBoundSettings = field(default_factory=LowerBoundSettings)


def _take(raw: dict, allowed: dict, where: str) -> dict:
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    out = {}
    for key, value in raw.items():
        out[allowed[key]] = tuple(value) if isinstance(value, list) else value
    return out


def parse_config(raw: dict) -> ExperimentConfig:
    """Strict JSON-document parsing: unknown keys are errors, not warnings."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    top = {
        "experiment": "experiment",
        "trials": "trials",
        "n_grid": "n_grid",
        "n_test": "n_test",
        "n_validation": "n_validation",
        "delta": "delta",
        "lambda": "lam",
        "penalty_scale": "penalty_scale",
        "seed": "seed",
        "cc": "cc",
        "ac": "ac",
        "lower_bound": "lower_bound",
    }
    kwargs = _take(raw, top, "config")
    if "experiment" not in kwargs:
        raise ConfigError("config must set 'experiment'")
    blocks = {
        "cc": (CcSettings, {"state_count": "state_count", "action_count": "action_count", "hidden_dims": "hidden_dims"}),
        "ac": (AcSettings, {"ambient_dim": "ambient_dim", "true_dim": "true_dim", "action_count": "action_count", "dims": "dims", "holdout_split": "holdout_split"}),
        "lower_bound": (LowerBoundSettings, {"n1": "n1", "n2": "n2", "algorithms": "algorithms"}),
    }
    for name, (cls, fields) in blocks.items():
        if name in kwargs:
            kwargs[name] = cls(**_take(dict(kwargs[name]), fields, name))
    config = ExperimentConfig(**kwargs)
    _validate(config)
    return config


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)


def _validate(c: ExperimentConfig):
    if c.experiment not in ("cc", "ac", "lower_bound"):
        raise ConfigError(f"experiment must be cc, ac, or lower_bound, got {c.experiment!r}")
    for name in ("trials", "n_test", "n_validation"):
        if int(getattr(c, name)) < 1:
            raise ConfigError(f"{name} must be positive")
    if any(int(n) < 1 for n in c.n_grid) or not c.n_grid:
        raise ConfigError("n_grid entries must be positive")
    if not (0 < c.delta <= MAX_DELTA + 1e-15):
        raise ConfigError("delta must lie in (0, 1/e]")
    if c.lam < 0:
        raise ConfigError("lambda must be nonnegative")
    if c.penalty_scale <= 0:
        raise ConfigError("penalty_scale must be positive")
    if c.cc.state_count < 1 or c.cc.action_count < 2:
        raise ConfigError("cc needs state_count >= 1 and action_count >= 2")
    if any(d < 1 for d in c.cc.hidden_dims) or not c.cc.hidden_dims:
        raise ConfigError("cc.hidden_dims must be positive")
    if not (1 <= c.ac.true_dim <= c.ac.ambient_dim):
        raise ConfigError("ac needs 1 <= true_dim <= ambient_dim")
    if c.ac.action_count < 2:
        raise ConfigError("ac.action_count must be >= 2")
    if not (0 < c.ac.holdout_split < 1):
        raise ConfigError("ac.holdout_split must lie in (0, 1)")
    if any(b <= a for a, b in zip(c.ac.dims, c.ac.dims[1:])) or not c.ac.dims:
        raise ConfigError("ac.dims must be strictly ascending")
    if c.ac.dims[-1] > c.ac.ambient_dim:
        raise ConfigError("ac.dims may not exceed ambient_dim")
    if any(int(v) < 1 for v in c.lower_bound.n1) or int(c.lower_bound.n2) < 1:
        raise ConfigError("lower_bound sample counts must be positive")
    for algo in c.lower_bound.algorithms:
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown lower_bound algorithm {algo!r}")


@dataclass(frozen=True)
class ResultRow:
    n: int
    method: str
    trial: int
    regret: float


def _cc_cell(config: ExperimentConfig, n: int, trial: int, audit: bool):
    s = config.cc
    seed = config.seed
    instance = make_tabular_instance(
        s.state_count, s.action_count, derive_seed(seed, "cc-instance", trial)
    )
    classes = realizable_family(instance, s.hidden_dims, derive_seed(seed, "cc-family", trial))
    mu = dirichlet_behavior(s.action_count, derive_seed(seed, "cc-behavior", trial))
    test_states = sample_states(instance, config.n_test, derive_seed(seed, "cc-test", trial))
    dataset = sample_dataset(instance, mu, n, derive_seed(seed, f"cc-data-{n}", trial))
    optimal = OptimalPolicy(instance)

    rows, reports = [], []
    for d_hid, mc in zip(s.hidden_dims, classes):
        learner = fit_pessimistic(dataset, mc, config.lam, config.delta, config.penalty_scale)
        regret = regret_estimate(instance, optimal, PessimisticPolicy(learner, mc), test_states)
        rows.append(ResultRow(n, f"class_{d_hid}", trial, regret))
    learners = [
        fit_pessimistic(dataset, mc, config.lam, config.delta / len(classes), config.penalty_scale)
        for mc in classes
    ]
    policy, report = complexity_coverage_policy(learners, classes, config.delta)
    rows.append(ResultRow(n, "cc", trial, regret_estimate(instance, optimal, policy, test_states)))
    if audit:
        reports.append({"n": n, "trial": trial, "method": "cc", "report": json.loads(report.to_json())})
    return rows, reports


def _ac_cell(config: ExperimentConfig, n: int, trial: int, audit: bool):
    s = config.ac
    seed = config.seed
    instance = make_gaussian_instance(
        s.ambient_dim, s.true_dim, s.action_count, derive_seed(seed, "ac-instance", trial)
    )
    classes = truncation_family(s.ambient_dim, s.dims)
    mu = dirichlet_behavior(s.action_count, derive_seed(seed, "ac-behavior", trial))
    test_states = sample_states(instance, config.n_test, derive_seed(seed, "ac-test", trial))
    validation = sample_states(
        instance, config.n_validation, derive_seed(seed, "ac-validation", trial)
    )
    dataset = sample_dataset(instance, mu, n, derive_seed(seed, f"ac-data-{n}", trial))
    optimal = OptimalPolicy(instance)

    rows, reports = [], []
    fits = []
    for mc in classes:
        phi = design_matrix(mc, dataset.states, dataset.actions)
        fit = ridge_fit(phi, dataset.rewards, config.lam)
        fits.append((fit, mc))
        regret = regret_estimate(instance, optimal, GreedyPolicy(fit, mc), test_states)
        rows.append(ResultRow(n, f"class_{mc.dim}", trial, regret))
    slope_policy, slope_report = slope_policy_select(
        fits, validation, config.delta, config.penalty_scale
    )
    rows.append(
        ResultRow(n, "slope", trial, regret_estimate(instance, optimal, slope_policy, test_states))
    )
    ho_policy, ho_report = holdout_select(
        dataset, classes, s.holdout_split, config.lam, derive_seed(seed, f"ac-holdout-{n}", trial)
    )
    rows.append(
        ResultRow(n, "holdout", trial, regret_estimate(instance, optimal, ho_policy, test_states))
    )
    if audit:
        for method, report in (("slope", slope_report), ("holdout", ho_report)):
            reports.append(
                {"n": n, "trial": trial, "method": method, "report": json.loads(report.to_json())}
            )
    return rows, reports


def _run_cells(cell_fn, config: ExperimentConfig, threads: int, audit: bool):
    cells = [(n, t) for n in config.n_grid for t in range(config.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(lambda c: cell_fn(config, c[0], c[1], audit), cells))
    else:
        outputs = [cell_fn(config, n, t, audit) for n, t in cells]
    rows = [row for out, _ in outputs for row in out]
    reports = [rep for _, out in outputs for rep in out]
    rows.sort(key=lambda r: (r.n, r.method, r.trial))
    reports.sort(key=lambda r: (r["n"], r["method"], r["trial"]))
    return rows, reports


def run_cc(config: ExperimentConfig, threads: int = 1, audit: bool = False):
    return _run_cells(_cc_cell, config, threads, audit)


def run_ac(config: ExperimentConfig, threads: int = 1, audit: bool = False):
    return _run_cells(_ac_cell, config, threads, audit)


def run_lower_bound(config: ExperimentConfig, threads: int = 1, audit: bool = False):
    s = config.lower_bound
    cells = [(algo, int(n1)) for algo in s.algorithms for n1 in s.n1]

    def one(cell):
        algo, n1 = cell
        return ratio_experiment(
            algo,
            n1,
            int(s.n2),
            config.trials,
            derive_seed(config.seed, f"lb-{algo}-{n1}"),
            delta=config.delta,
            lam=config.lam,
            penalty_scale=config.penalty_scale,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, cells))
    else:
        results = [one(c) for c in cells]
    results.sort(key=lambda r: (r.algorithm, r.n1, r.n2))
    return results, []


def results_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "method", "trial", "regret"])
    for r in rows:
        writer.writerow([r.n, r.method, r.trial, repr(r.regret)])
    return buf.getvalue()


def aggregate_rows(rows: list[ResultRow]) -> list[tuple]:
    """Per-(n, method) mean regret and standard error of the mean."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r.n, r.method), []).append(r.regret)
    out = []
    for (n, method), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        out.append((n, method, float(arr.mean()), se))
    return out


def aggregate_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "method", "mean_regret", "stderr"])
    for n, method, mean, se in aggregate_rows(rows):
        writer.writerow([n, method, repr(mean), repr(se)])
    return buf.getvalue()


def lower_bound_aggregate_to_csv(results: list[RatioResult]) -> str:
    """Lower-bound runs reuse the aggregate schema with n = n1 and the
    max-over-instances mean regret; the full detail lives in results.csv."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "method", "mean_regret", "stderr"])
    entries = sorted(results, key=lambda r: (r.n1, r.algorithm))
    for r in entries:
        writer.writerow([r.n1, r.algorithm, repr(r.max_mean_regret), repr(r.max_se)])
    return buf.getvalue()
