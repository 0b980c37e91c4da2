"""Iteratively reweighted estimators S1, S2 and QKP.

Each estimator alternates a weighted graphical-lasso solve for ``S`` with
closed-form hyperparameter updates, i.e. block coordinate descent on the
negative log joint density

    l(S, hyper) = -(N/2) log|S| + (N/2) tr(S Sigma) + penalty(S; hyper)
                  + hyperprior(hyper)

(constants dropped).  For QKP the penalty is ``sum lambda_jk gamma_il
|s_jk,il|`` and the hyperprior ``sum (eps1 lambda_jk - m2^2 log lambda_jk) +
sum (eps2 gamma_il - m1^2 log gamma_il)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .glasso import SolverOptions, solve_weighted_glasso
from .kron_init import init_hyperparams
from .matrix import KroneckerShape, NotPositiveDefinite, as_symmetric, cholesky_logdet, to_blocks

logger = logging.getLogger(__name__)


class Algorithm(str, Enum):
    S1 = "s1"
    S2 = "s2"
    QKP = "qkp"


@dataclass(frozen=True)
class ScalarHyper:
    """One weight ``gamma`` shared by every entry (S1)."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def weights(self, m: int) -> np.ndarray:
        return np.full((m, m), float(self.gamma))

    def prior(self, m: int, config: "FitConfig") -> float:
        return config.eps * self.gamma - m * m * np.log(self.gamma)

    def count(self, m: int) -> int:
        return 1


@dataclass(frozen=True)
class FullHyper:
    """One weight per entry, symmetric (S2)."""

    gamma: np.ndarray

    def __post_init__(self):
        g = as_symmetric(self.gamma)
        if not np.all(g > 0):
            raise ValueError("hyperparameters must be positive")
        object.__setattr__(self, "gamma", g)

    def weights(self, m: int) -> np.ndarray:
        return self.gamma

    def prior(self, m: int, config: "FitConfig") -> float:
        return float(np.sum(config.eps * self.gamma - np.log(self.gamma)))

    def count(self, m: int) -> int:
        return m * (m + 1) // 2


@dataclass(frozen=True)
class QkpHyper:
    """Module weights ``lam`` (m1 x m1) and node weights ``gam`` (m2 x m2)."""

    lam: np.ndarray
    gam: np.ndarray

    def __post_init__(self):
        lam, gam = as_symmetric(self.lam), as_symmetric(self.gam)
        if not (np.all(lam > 0) and np.all(gam > 0)):
            raise ValueError("hyperparameters must be positive")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gam", gam)

    @property
    def shape(self) -> KroneckerShape:
        return KroneckerShape(self.lam.shape[0], self.gam.shape[0])

    def weights(self, m: int) -> np.ndarray:
        return np.kron(self.lam, self.gam)

    def prior(self, m: int, config: "FitConfig") -> float:
        m1, m2 = self.lam.shape[0], self.gam.shape[0]
        return float(
            np.sum(config.eps1 * self.lam - m2 * m2 * np.log(self.lam))
            + np.sum(config.eps2 * self.gam - m1 * m1 * np.log(self.gam))
        )

    def count(self, m: int) -> int:
        m1, m2 = self.lam.shape[0], self.gam.shape[0]
        return m1 * (m1 + 1) // 2 + m2 * (m2 + 1) // 2


def hyper_count(algorithm, shape: KroneckerShape) -> int:
    """Number of free hyperparameters (symmetric matrices counted once)."""
    algorithm = Algorithm(algorithm)
    m = shape.m
    if algorithm is Algorithm.S1:
        return 1
    if algorithm is Algorithm.S2:
        return m * (m + 1) // 2
    return shape.m1 * (shape.m1 + 1) // 2 + shape.m2 * (shape.m2 + 1) // 2


@dataclass(frozen=True)
class FitConfig:
    eps: float = 0.1
    eps1: float = 0.1
    eps2: float = 0.1
    eps_stop: float = 1e-4
    max_outer_iter: int = 200
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        for name in ("eps", "eps1", "eps2", "eps_stop"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer_iter < 1:
            raise ValueError("max_outer_iter must be >= 1")


@dataclass
class FitReport:
    algorithm: Algorithm
    S_hat: np.ndarray
    hyper: object
    objective_trace: list
    substep_trace: list
    step_norms: list
    outer_iterations: int
    termination: str  # "converged" or "max_iter"
    inner_iterations: list = field(default_factory=list)
    kkt_residuals: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    def descent_violation(self) -> float:
        """Largest increase between consecutive sub-step objective values."""
        vals = np.array([v for _, _, v in self.substep_trace])
        if vals.size < 2:
            return 0.0
        return float(max(0.0, np.max(np.diff(vals))))


def joint_neg_loglik(S, hyper, config: FitConfig, sigma, n) -> float:
    """Negative log joint density of data, ``S`` and hyperparameters.

    Terms that depend on none of ``S`` and the hyperparameters are dropped.
    """
    S = np.asarray(S, dtype=float)
    res = cholesky_logdet(S)
    if res is None:
        raise NotPositiveDefinite("S is not positive definite")
    m = S.shape[0]
    W = hyper.weights(m)
    return float(
        0.5 * n * (-res[1] + np.sum(S * sigma))
        + np.sum(W * np.abs(S))
        + hyper.prior(m, config)
    )


def update_gamma_s1(S, eps: float) -> float:
    """``m^2 / (sum |s_jk| + eps)``."""
    S = np.asarray(S)
    m = S.shape[0]
    return float(m * m / (np.abs(S).sum() + eps))


def update_gamma_s2(S, eps: float) -> np.ndarray:
    """Entrywise ``1 / (|s_jk| + eps)``."""
    return 1.0 / (np.abs(np.asarray(S)) + eps)


def update_lambda_qkp(S, gam_prev, eps1: float, shape: KroneckerShape) -> np.ndarray:
    """``lambda_jk = m2^2 / (sum_il gamma_il |s_jk,il| + eps1)``."""
    B = np.abs(to_blocks(S, shape))
    return shape.m2**2 / (np.einsum("jkil,il->jk", B, gam_prev) + eps1)


def update_gamma_qkp(S, lam_new, eps2: float, shape: KroneckerShape) -> np.ndarray:
    """``gamma_il = m1^2 / (sum_jk lambda_jk |s_jk,il| + eps2)``; uses the updated lambda."""
    B = np.abs(to_blocks(S, shape))
    return shape.m1**2 / (np.einsum("jkil,jk->il", B, lam_new) + eps2)


def default_init(algorithm, sigma, shape: KroneckerShape | None = None):
    """All-ones hyperparameters for S1/S2, Kronecker-fit initialization for QKP."""
    algorithm = Algorithm(algorithm)
    m = np.asarray(sigma).shape[0]
    if algorithm is Algorithm.S1:
        return ScalarHyper(1.0)
    if algorithm is Algorithm.S2:
        return FullHyper(np.ones((m, m)))
    if shape is None:
        raise ValueError("QKP needs a KroneckerShape")
    ki = init_hyperparams(sigma, shape)
    return QkpHyper(ki.lam0, ki.gam0)


def _update(algorithm, S, hyper, config, shape):
    """Yield ``(stage, new_hyper)`` for each hyperparameter sub-step."""
    if algorithm is Algorithm.S1:
        yield "gamma", ScalarHyper(update_gamma_s1(S, config.eps))
    elif algorithm is Algorithm.S2:
        G = update_gamma_s2(S, config.eps)
        yield "gamma", FullHyper(0.5 * (G + G.T))
    else:
        lam = update_lambda_qkp(S, hyper.gam, config.eps1, shape)
        hyper = QkpHyper(0.5 * (lam + lam.T), hyper.gam)
        yield "lambda", hyper
        gam = update_gamma_qkp(S, hyper.lam, config.eps2, shape)
        yield "gamma", QkpHyper(hyper.lam, 0.5 * (gam + gam.T))


def fit(sigma, n, algorithm, init=None, config: FitConfig | None = None,
        shape: KroneckerShape | None = None) -> FitReport:
    """Run one of the reweighted estimators to convergence.

    Stops when ``||S^(h) - S^(h-1)||_F <= config.eps_stop`` or after
    ``config.max_outer_iter`` outer iterations.
    """
    algorithm = Algorithm(algorithm)
    config = config or FitConfig()
    sigma = as_symmetric(sigma)
    if cholesky_logdet(sigma) is None:
        raise NotPositiveDefinite("sample covariance is not positive definite")
    m = sigma.shape[0]
    if algorithm is Algorithm.QKP:
        if shape is None and isinstance(init, QkpHyper):
            shape = init.shape
        if shape is None or shape.m != m:
            raise ValueError(f"QKP needs a KroneckerShape with m1*m2 == {m}")
    hyper = init if init is not None else default_init(algorithm, sigma, shape)
    expected = {Algorithm.S1: ScalarHyper, Algorithm.S2: FullHyper, Algorithm.QKP: QkpHyper}
    if not isinstance(hyper, expected[algorithm]):
        raise TypeError(f"{algorithm.value} needs {expected[algorithm].__name__} hyperparameters")
    if algorithm is Algorithm.QKP and hyper.shape != shape:
        raise ValueError("hyperparameter shape does not match")

    objective_trace, substeps, steps, inner, kkts = [], [], [], [], []
    S_prev = None
    termination = "max_iter"
    h = 0
    for h in range(1, config.max_outer_iter + 1):
        sol = solve_weighted_glasso(sigma, n, hyper.weights(m), config.solver, init=S_prev)
        S = sol.S_hat
        inner.append(sol.inner_iterations)
        kkts.append(sol.kkt_residual)
        substeps.append((h, "S", joint_neg_loglik(S, hyper, config, sigma, n)))
        for stage, hyper in _update(algorithm, S, hyper, config, shape):
            substeps.append((h, stage, joint_neg_loglik(S, hyper, config, sigma, n)))
        objective_trace.append(substeps[-1][2])
        step = np.inf if S_prev is None else float(np.linalg.norm(S - S_prev))
        steps.append(step)
        S_prev = S
        logger.debug("%s iter %d: objective %.10g step %.3e", algorithm.value, h, objective_trace[-1], step)
        if step <= config.eps_stop:
            termination = "converged"
            break

    report = FitReport(
        algorithm=algorithm,
        S_hat=S_prev,
        hyper=hyper,
        objective_trace=objective_trace,
        substep_trace=substeps,
        step_norms=steps,
        outer_iterations=h,
        termination=termination,
        inner_iterations=inner,
        kkt_residuals=kkts,
    )
    viol = report.descent_violation()
    if viol > 1e-9 * max(1.0, abs(objective_trace[0])):
        logger.warning("%s: objective increased by %.3e across a sub-step", algorithm.value, viol)
    return report
