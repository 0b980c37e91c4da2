"""Monte Carlo comparison of the S1, S2 and QKP estimators."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from .estimators import Algorithm, FitConfig, fit, hyper_count
from .glasso import SolverOptions
from .matrix import RNG_ALGORITHM, KroneckerShape, write_matrix
from .metrics import DEFAULT_TAU, trial_errors
from .synth import generate_trial, trial_seed

logger = logging.getLogger(__name__)

ESTIMATORS = ("s1", "s2", "qkp")


@dataclass
class ExperimentConfig:
    m1: int = 6
    m2: int = 10
    trials: int = 60
    n: int = 1000
    fraction: float = 0.2
    estimators: tuple = ESTIMATORS
    seed: int = 42
    eps: float = 0.1
    eps1: float = 0.1
    eps2: float = 0.1
    eps_stop: float = 1e-4
    max_outer_iter: int = 200
    kkt_tol: float | None = None
    max_inner_iter: int = 5000
    rho_init: float = 1.0
    warm_start: bool = True
    tau: float = DEFAULT_TAU
    jobs: int | None = None
    out: str | None = None

    def __post_init__(self):
        self.estimators = tuple(Algorithm(e).value for e in self.estimators)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        if self.n < 1 or self.m1 < 1 or self.m2 < 1:
            raise ValueError("n, m1, m2 must be positive")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        for name in ("eps", "eps1", "eps2", "eps_stop", "rho_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kkt_tol is not None and not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be positive")

    @property
    def shape(self) -> KroneckerShape:
        return KroneckerShape(self.m1, self.m2)

    def fit_config(self) -> FitConfig:
        solver = SolverOptions(
            kkt_tol=self.kkt_tol,
            max_inner_iter=self.max_inner_iter,
            rho_init=self.rho_init,
            warm_start=self.warm_start,
        )
        return FitConfig(
            eps=self.eps,
            eps1=self.eps1,
            eps2=self.eps2,
            eps_stop=self.eps_stop,
            max_outer_iter=self.max_outer_iter,
            solver=solver,
        )

    def resolved_jobs(self) -> int:
        return self.jobs if self.jobs else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        d = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(d)


@dataclass
class TrialResult:
    trial: int
    rows: list = field(default_factory=list)
    supports: dict = field(default_factory=dict)
    error: str | None = None


def run_trial(config: ExperimentConfig, t: int) -> TrialResult:
    """Generate trial ``t``, fit every estimator, score the fits."""
    result = TrialResult(trial=t)
    try:
        with threadpool_limits(limits=1):
            tr = generate_trial(config.shape, config.fraction, config.n, trial_seed(config.seed, t))
            result.supports["true"] = tr.model.E
            fc = config.fit_config()
            for name in config.estimators:
                t0 = time.perf_counter()
                report = fit(tr.sigma, config.n, name, config=fc, shape=config.shape)
                seconds = time.perf_counter() - t0
                errs, E_hat = trial_errors(name, tr.model.S_true, tr.model.E, report.S_hat, config.tau)
                result.supports[name] = E_hat
                result.rows.append({
                    "trial": t,
                    "estimator": name,
                    "e_rel": errs.e_rel,
                    "e_sp": errs.e_sp,
                    "mismatch": errs.mismatch,
                    "tp": errs.true_positives,
                    "fp": errs.false_positives,
                    "fn": errs.false_negatives,
                    "iterations": report.outer_iterations,
                    "termination": report.termination,
                    "descent_violation": report.descent_violation(),
                    "seconds": seconds,
                })
    except Exception as exc:  # recorded per trial, reported by the caller
        logger.exception("trial %d failed", t)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    rows: list
    supports: dict
    failures: dict

    @property
    def hyper_counts(self) -> dict:
        return {e: hyper_count(e, self.config.shape) for e in self.config.estimators}

    def values(self, estimator: str, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.rows if r["estimator"] == estimator], dtype=float)

    def median(self, estimator: str, metric: str) -> float:
        return float(np.median(self.values(estimator, metric)))

    def boxplot(self) -> list:
        out = []
        for e in self.config.estimators:
            for metric in ("e_sp", "e_rel"):
                v = self.values(e, metric)
                if v.size == 0:
                    raise ValueError(f"no results for estimator {e}")
                q = np.percentile(v, [0, 25, 50, 75, 100])
                out.append({"estimator": e, "metric": metric, "min": q[0], "q1": q[1],
                            "median": q[2], "q3": q[3], "max": q[4]})
        return out


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Run every trial; results do not depend on the parallelism degree."""
    jobs = min(config.resolved_jobs(), config.trials)
    idx = range(config.trials)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_trial, [config] * config.trials, idx))
    else:
        results = [run_trial(config, t) for t in idx]
    results.sort(key=lambda r: r.trial)
    rows, supports, failures = [], {}, {}
    for r in results:
        if r.error is not None:
            failures[r.trial] = r.error
            continue
        rows.extend(r.rows)
        supports[r.trial] = r.supports
    return ExperimentSummary(config=config, rows=rows, supports=supports, failures=failures)


ERROR_COLUMNS = ("trial", "estimator", "e_rel", "e_sp", "mismatch", "tp", "fp", "fn",
                 "iterations", "termination")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in header) + "\n")


def render_support(E, m2: int) -> str:
    """ASCII grid: ``#`` for an edge, ``.`` otherwise, rules between modules."""
    E = np.asarray(E)
    m = E.shape[0]
    lines = []
    rule = "+".join("-" * (2 * m2 - 1) for _ in range(m // m2))
    for a in range(m):
        if a and a % m2 == 0:
            lines.append(rule)
        cells = []
        for b in range(m):
            if b and b % m2 == 0:
                cells.append("|")
            elif b:
                cells.append(" ")
            cells.append("#" if E[a, b] else ".")
        lines.append("".join(cells))
    return "\n".join(lines)


def emit_outputs(summary: ExperimentSummary, directory) -> Path:
    """Write errors.csv, timings.csv, boxplot.csv, support grids and the resolved config."""
    d = Path(directory)
    if not summary.rows:
        raise ValueError("no successful trials to write")
    boxplot = summary.boxplot()  # raises on an estimator without results
    d.mkdir(parents=True, exist_ok=True)
    _write_csv(d / "errors.csv", ERROR_COLUMNS, summary.rows)
    _write_csv(d / "timings.csv", ("trial", "estimator", "seconds"), summary.rows)
    _write_csv(d / "boxplot.csv", ("estimator", "metric", "min", "q1", "median", "q3", "max"), boxplot)

    cfg = summary.config.to_dict()
    (d / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True))
    meta = {
        "rng": RNG_ALGORITHM,
        "trial_seed": "SeedSequence([seed, trial])",
        "hyper_counts": summary.hyper_counts,
        "medians": {e: {m: summary.median(e, m) for m in ("e_sp", "e_rel")}
                    for e in summary.config.estimators},
        "failures": {str(k): v for k, v in summary.failures.items()},
    }
    (d / "summary.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    sup = d / "supports"
    sup.mkdir(exist_ok=True)
    m2 = summary.config.m2
    for t, grids in summary.supports.items():
        td = sup / f"trial_{t:03d}"
        td.mkdir(exist_ok=True)
        text = []
        for name, E in grids.items():
            write_matrix(td / f"{name}.csv", E, fmt="%d")
            text.append(f"[{name}]\n{render_support(E, m2)}\n")
        (td / "supports.txt").write_text("\n".join(text))
    return d
