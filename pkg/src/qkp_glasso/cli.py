"""Command-line interface: ``qkp-glasso {generate,fit,experiment,metrics}``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 some trials failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .estimators import Algorithm, FitConfig, FullHyper, QkpHyper, ScalarHyper, fit
from .glasso import SolverOptions
from .harness import ExperimentConfig, emit_outputs, run_experiment
from .matrix import KroneckerShape, NotPositiveDefinite, read_matrix, write_matrix
from .metrics import DEFAULT_TAU, extract_support, relative_error, sparsity_error
from .synth import generate_trial, trial_seed, write_trial

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_fit_options(p):
    p.add_argument("--eps", type=float, help="S1/S2 hyperprior rate (default 0.1)")
    p.add_argument("--eps1", type=float, help="QKP module hyperprior rate (default 0.1)")
    p.add_argument("--eps2", type=float, help="QKP node hyperprior rate (default 0.1)")
    p.add_argument("--eps-stop", type=float, dest="eps_stop")
    p.add_argument("--max-outer-iter", type=int, dest="max_outer_iter")
    p.add_argument("--kkt-tol", type=float, dest="kkt_tol")
    p.add_argument("--max-inner-iter", type=int, dest="max_inner_iter")
    p.add_argument("--rho-init", type=float, dest="rho_init")
    p.add_argument("--no-warm-start", action="store_false", dest="warm_start", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkp-glasso", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write simulated trials to disk")
    g.add_argument("--m1", type=int, default=6)
    g.add_argument("--m2", type=int, default=10)
    g.add_argument("--trials", type=int, default=1)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--fraction", type=float, default=0.2)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="fit one estimator to a sample covariance")
    f.add_argument("--sigma", required=True, help="sample covariance CSV")
    f.add_argument("--n", type=int, required=True, help="sample count N")
    f.add_argument("--algo", choices=[a.value for a in Algorithm], required=True)
    f.add_argument("--m1", type=int)
    f.add_argument("--m2", type=int)
    f.add_argument("--config", help="YAML file with fit options")
    f.add_argument("--out", required=True)
    _add_fit_options(f)

    e = sub.add_parser("experiment", help="full Monte Carlo comparison")
    e.add_argument("--config", help="YAML experiment config; flags override it")
    e.add_argument("--m1", type=int)
    e.add_argument("--m2", type=int)
    e.add_argument("--trials", type=int)
    e.add_argument("--n", type=int)
    e.add_argument("--fraction", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--estimators", help="comma separated subset of s1,s2,qkp")
    e.add_argument("--tau", type=float)
    e.add_argument("--jobs", type=int)
    e.add_argument("--out", required=True)
    _add_fit_options(e)

    m = sub.add_parser("metrics", help="compare an estimate against the truth")
    m.add_argument("--true", required=True, dest="true_path")
    m.add_argument("--est", required=True, dest="est_path")
    m.add_argument("--support", action="store_true", help="inputs are 0/1 supports")
    m.add_argument("--tau", type=float, default=DEFAULT_TAU)
    return parser


_FIT_KEYS = ("eps", "eps1", "eps2", "eps_stop", "max_outer_iter")
_SOLVER_KEYS = ("kkt_tol", "max_inner_iter", "rho_init", "warm_start")


def _overrides(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _fit_config(args) -> FitConfig:
    base = ExperimentConfig().to_dict()
    if args.config:
        base.update(yaml.safe_load(Path(args.config).read_text()) or {})
    base.update(_overrides(args, _FIT_KEYS + _SOLVER_KEYS))
    solver = SolverOptions(**{k: base[k] for k in _SOLVER_KEYS})
    return FitConfig(solver=solver, **{k: base[k] for k in _FIT_KEYS})


def cmd_generate(args) -> int:
    shape = KroneckerShape(args.m1, args.m2)
    out = Path(args.out)
    for t in range(args.trials):
        tr = generate_trial(shape, args.fraction, args.n, trial_seed(args.seed, t))
        write_trial(out / f"trial_{t:03d}", tr)
    return EXIT_OK


def cmd_fit(args) -> int:
    sigma = read_matrix(args.sigma)
    algo = Algorithm(args.algo)
    shape = None
    if args.m1 is not None or args.m2 is not None:
        if args.m1 is None or args.m2 is None:
            raise UsageError("--m1 and --m2 go together")
        shape = KroneckerShape(args.m1, args.m2)
    if algo is Algorithm.QKP and shape is None:
        raise UsageError("qkp needs --m1 and --m2")
    if shape is not None and shape.m != sigma.shape[0]:
        raise UsageError(f"m1*m2 = {shape.m} does not match sigma of size {sigma.shape[0]}")
    report = fit(sigma, args.n, algo, config=_fit_config(args), shape=shape)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "S_hat.csv", report.S_hat)
    hyper = report.hyper
    if isinstance(hyper, QkpHyper):
        write_matrix(out / "lambda.csv", hyper.lam)
        write_matrix(out / "gamma.csv", hyper.gam)
    elif isinstance(hyper, FullHyper):
        write_matrix(out / "gamma.csv", hyper.gamma)
    info = {
        "algorithm": algo.value,
        "n": args.n,
        "outer_iterations": report.outer_iterations,
        "termination": report.termination,
        "objective_trace": report.objective_trace,
        "step_norms": [s if np.isfinite(s) else None for s in report.step_norms],
        "kkt_residuals": report.kkt_residuals,
    }
    if isinstance(hyper, ScalarHyper):
        info["gamma"] = hyper.gamma
    (out / "report.json").write_text(json.dumps(info, indent=2) + "\n")
    print(f"{algo.value}: {report.termination} after {report.outer_iterations} iterations, "
          f"objective {report.objective_trace[-1]:.10g}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    d = ExperimentConfig().to_dict()
    if args.config:
        d.update(yaml.safe_load(Path(args.config).read_text()) or {})
    keys = ("m1", "m2", "trials", "n", "fraction", "seed", "tau", "jobs") + _FIT_KEYS + _SOLVER_KEYS
    d.update(_overrides(args, keys))
    if args.estimators:
        d["estimators"] = [s.strip() for s in args.estimators.split(",") if s.strip()]
    d["out"] = args.out
    config = ExperimentConfig.from_dict(d)

    summary = run_experiment(config)
    if not summary.rows:
        for t, msg in summary.failures.items():
            print(f"trial {t} failed: {msg}", file=sys.stderr)
        return EXIT_NUMERIC
    emit_outputs(summary, args.out)
    for e in config.estimators:
        print(f"{e:>4}: hyperparameters {summary.hyper_counts[e]:>5}  "
              f"median e_sp {summary.median(e, 'e_sp'):.6g}  median e_rel {summary.median(e, 'e_rel'):.6g}")
    if summary.failures:
        for t, msg in summary.failures.items():
            print(f"trial {t} failed: {msg}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_metrics(args) -> int:
    A, B = read_matrix(args.true_path), read_matrix(args.est_path)
    if A.shape != B.shape:
        raise UsageError(f"shape mismatch: {A.shape} vs {B.shape}")
    if args.support:
        print(f"e_sp {sparsity_error(A, B)!r}")
    else:
        E_true, E_hat = extract_support(A, 0.0), extract_support(B, args.tau)
        print(f"e_rel {relative_error(A, B)!r}")
        print(f"e_sp {sparsity_error(E_true, E_hat)!r}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "experiment": cmd_experiment, "metrics": cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NotPositiveDefinite as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
