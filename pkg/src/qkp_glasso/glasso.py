"""Weighted graphical lasso.

Solves

    minimize  -(N/2) log|S| + (N/2) tr(S Sigma) + sum_ab w_ab |s_ab|   over S > 0

for an arbitrary nonnegative symmetric weight matrix ``W``.  Internally the
objective is divided by ``N/2`` so the penalty becomes ``V = 2W/N``; that
makes ``(N, W)`` and ``(cN, cW)`` the same problem.

The solve has two phases:

1. ADMM on the split ``S = Z`` with the closed-form eigen-decomposition prox
   for the logdet term and entrywise soft-thresholding for the penalty.
   Adaptive penalty parameter.  This identifies the support.
2. Active-set Newton on the sign-fixed face given by the ADMM support, with
   an Armijo line search that keeps the iterate positive definite and never
   lets a penalized entry change sign.  Zero entries that violate the KKT
   conditions are released into the free set.  This phase is a descent
   method and produces the KKT certificate.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg

from .matrix import NotPositiveDefinite, as_symmetric, cholesky_logdet

logger = logging.getLogger(__name__)

_SQRT2 = np.sqrt(2.0)


class MaxIterationsExceeded(RuntimeWarning):
    """The solver stopped before certifying the KKT tolerance."""


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float | None = None  # None means 1e-6 * N
    max_inner_iter: int = 5000
    rho_init: float = 1.0
    warm_start: bool = True
    admm_tol: float = 1e-7  # residual tolerance per dimension
    penalize_diagonal: bool = True
    zero_tol: float = 1e-10
    max_newton_iter: int = 200
    dense_hessian_max: int = 600  # free-set size above which Newton uses CG

    def __post_init__(self):
        if self.kkt_tol is not None and self.kkt_tol <= 0:
            raise ValueError("kkt_tol must be positive")
        if self.max_inner_iter < 1 or self.rho_init <= 0 or self.admm_tol <= 0:
            raise ValueError("invalid solver options")

    def resolved_kkt_tol(self, n: float) -> float:
        return 1e-6 * n if self.kkt_tol is None else self.kkt_tol


@dataclass
class GlassoSolution:
    S_hat: np.ndarray
    objective: float
    kkt_residual: float
    inner_iterations: int
    converged: bool
    admm_iterations: int = 0
    newton_iterations: int = 0
    objective_trace: list = field(default_factory=list)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.S_hat))


def glasso_objective(S, sigma, n, W) -> float:
    """``-(N/2) log|S| + (N/2) tr(S Sigma) + sum w|s|``; ``inf`` if ``S`` is not PD."""
    res = cholesky_logdet(S)
    if res is None:
        return np.inf
    return 0.5 * n * (-res[1] + float(np.sum(S * sigma))) + float(np.sum(W * np.abs(S)))


def kkt_residual(S, sigma, n, W) -> float:
    """Largest violation of the subgradient optimality conditions at ``S``."""
    res = cholesky_logdet(S)
    if res is None:
        raise NotPositiveDefinite("S is not positive definite")
    X = linalg.cho_solve((res[0], True), np.eye(S.shape[0]))
    return 0.5 * n * _scaled_kkt(S, sigma - X, 2.0 * np.asarray(W) / n)


def _scaled_kkt(S, G, V) -> float:
    nz = S != 0
    r = np.where(nz, np.abs(G + V * np.sign(S)), np.maximum(np.abs(G) - V, 0.0))
    return float(r.max())


def _objective(S, sigma, V) -> float:
    res = cholesky_logdet(S)
    if res is None:
        return np.inf
    return -res[1] + float(np.sum(S * sigma)) + float(np.sum(V * np.abs(S)))


def _inverse(S):
    res = cholesky_logdet(S)
    if res is None:
        return None
    X = linalg.cho_solve((res[0], True), np.eye(S.shape[0]))
    return 0.5 * (X + X.T)


def _soft_threshold(A, T):
    return np.sign(A) * np.maximum(np.abs(A) - T, 0.0)


def _admm(sigma, V, Z, rho, tol, max_iter):
    """Scaled-form ADMM; returns ``(X, Z, iterations, converged)``."""
    m = sigma.shape[0]
    X0 = _inverse(Z)
    U = (X0 - sigma) / rho if X0 is not None else np.zeros_like(Z)
    eps = tol * m
    X = Z
    for it in range(1, max_iter + 1):
        evals, Q = np.linalg.eigh(rho * (Z - U) - sigma)
        x = (evals + np.sqrt(evals * evals + 4.0 * rho)) / (2.0 * rho)
        X = (Q * x) @ Q.T
        X = 0.5 * (X + X.T)
        Z_old = Z
        Z = _soft_threshold(X + U, V / rho)
        U = U + X - Z
        r = np.linalg.norm(X - Z)
        s = rho * np.linalg.norm(Z - Z_old)
        if r <= eps and s <= eps:
            return X, Z, it, True
        if r > 10.0 * s:
            rho *= 2.0
            U /= 2.0
        elif s > 10.0 * r:
            rho /= 2.0
            U *= 2.0
    return X, Z, max_iter, False


class _Face:
    """Free entries (upper triangle incl. diagonal) and their scaling."""

    def __init__(self, mask):
        r, c = np.nonzero(np.triu(mask))
        self.r, self.c = r, c
        self.scale = np.where(r == c, 1.0, _SQRT2)
        self.k = r.size

    def to_vec(self, M):
        return M[self.r, self.c] * self.scale

    def to_mat(self, u, m):
        D = np.zeros((m, m))
        d = u / self.scale
        D[self.r, self.c] = d
        D[self.c, self.r] = d
        return D

    def hessian(self, X):
        r, c, sc = self.r, self.c, self.scale
        T = X[np.ix_(r, r)] * X[np.ix_(c, c)] + X[np.ix_(r, c)] * X[np.ix_(c, r)]
        H = T * (sc[:, None] / sc[None, :]) * np.where(r == c, 0.5, 1.0)[None, :]
        return 0.5 * (H + H.T)


def _newton_direction(face, X, g, m, dense_max):
    if face.k <= dense_max:
        H = face.hessian(X)
        try:
            return linalg.solve(H, -g, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            return linalg.lstsq(H, -g)[0]

    def matvec(u):
        D = face.to_mat(u, m)
        return face.to_vec(X @ D @ X)

    op = LinearOperator((face.k, face.k), matvec=matvec, dtype=float)
    u, _ = cg(op, -g, rtol=1e-10, maxiter=10 * face.k)
    return u


def _projected_step(S, D, sign, penalized, f, GF, sigma, V):
    """Armijo backtracking on ``S + alpha D`` projected onto the sign orthant."""
    alpha = 1.0
    while alpha > 1e-10:
        S_new = S + alpha * D
        S_new[penalized & (sign * S_new < 0)] = 0.0
        S_new = 0.5 * (S_new + S_new.T)
        model = float(np.sum(GF * (S_new - S)))
        if model < 0:
            f_new = _objective(S_new, sigma, V)
            if f_new <= f + 1e-4 * model:
                return S_new, f_new
        alpha *= 0.5
    return None


def _truncated_step(S, D, sign, penalized, f, decrement, sigma, V):
    """Armijo backtracking that stops at the first sign crossing."""
    blocking = penalized & (S != 0) & (sign * D < 0)
    ratios = np.full_like(S, np.inf)
    ratios[blocking] = -S[blocking] / D[blocking]
    alpha_max = float(ratios.min())
    hit = ratios <= alpha_max * (1 + 1e-12)
    alpha = min(1.0, alpha_max)
    while alpha > 1e-14:
        S_new = S + alpha * D
        if alpha == alpha_max:
            S_new[hit] = 0.0
        S_new = 0.5 * (S_new + S_new.T)
        f_new = _objective(S_new, sigma, V)
        if f_new <= f + 1e-4 * alpha * decrement:
            return S_new, f_new
        alpha *= 0.5
    return None


def _polish(S, sigma, V, target, opts, trace):
    """Active-set Newton.  Returns ``(S, kkt, iterations)``; ``kkt`` is scaled."""
    m = S.shape[0]
    penalized = V > 0
    f = _objective(S, sigma, V)
    trace.append(f)
    it = 0
    for it in range(1, opts.max_newton_iter + 1):
        X = _inverse(S)
        G = sigma - X
        kkt = _scaled_kkt(S, G, V)
        if kkt <= target:
            return S, kkt, it - 1
        violators = (S == 0) & (np.abs(G) > V)
        sign = np.where(violators, -np.sign(G), np.sign(S))
        free = (S != 0) | violators | ~penalized
        np.fill_diagonal(free, True)
        GF = G + V * sign

        face = _Face(free)
        D = face.to_mat(_newton_direction(face, X, face.to_vec(GF), m, opts.dense_hessian_max), m)
        if float(np.sum(GF * D)) >= 0:
            break
        step = _projected_step(S, D, sign, penalized, f, GF, sigma, V)
        if step is None:
            # released entries must move in the direction of their sign
            for _ in range(m * m):
                wrong = (S == 0) & free & penalized & (sign * D < 0)
                if not wrong.any():
                    break
                free &= ~wrong
                face = _Face(free)
                D = face.to_mat(_newton_direction(face, X, face.to_vec(GF), m, opts.dense_hessian_max), m)
            decrement = float(np.sum(GF * D))
            if decrement >= 0:
                break
            step = _truncated_step(S, D, sign, penalized, f, decrement, sigma, V)
        if step is None or step[1] > f:
            break
        stalled = step[1] == f
        S, f = step
        trace.append(f)
        if stalled:
            break
    X = _inverse(S)
    kkt = _scaled_kkt(S, sigma - X, V)
    return S, kkt, it


def solve_weighted_glasso(sigma, n, W, opts: SolverOptions | None = None, init=None) -> GlassoSolution:
    """Minimize the weighted-l1 penalized Gaussian negative log-likelihood.

    Parameters
    ----------
    sigma : (m, m) array
        Sample covariance, positive definite.
    n : float
        Sample count ``N``.
    W : (m, m) array
        Nonnegative symmetric weights on ``|s_ab|`` (diagonal included).
    opts : SolverOptions, optional
    init : (m, m) array, optional
        Positive definite starting point (warm start).

    Returns
    -------
    GlassoSolution
        ``converged`` is False when the KKT tolerance was not certified; the
        best iterate is returned in that case together with its residual.
    """
    opts = opts or SolverOptions()
    sigma = as_symmetric(sigma)
    if cholesky_logdet(sigma) is None:
        raise NotPositiveDefinite("sample covariance is not positive definite")
    if n <= 0:
        raise ValueError("sample count must be positive")
    W = as_symmetric(W)
    if W.shape != sigma.shape:
        raise ValueError(f"weight shape {W.shape} does not match {sigma.shape}")
    if np.any(W < 0):
        raise ValueError("weights must be nonnegative")
    if not opts.penalize_diagonal:
        W = W.copy()
        np.fill_diagonal(W, 0.0)

    m = sigma.shape[0]
    V = 2.0 * W / n
    target = opts.resolved_kkt_tol(n) * 2.0 / n

    if init is not None and opts.warm_start and cholesky_logdet(init) is not None:
        Z0 = as_symmetric(init)
    else:
        Z0 = np.diag(1.0 / (np.diag(sigma) + np.diag(V)))

    X, Z, admm_it, _ = _admm(sigma, V, Z0, opts.rho_init, opts.admm_tol, opts.max_inner_iter)
    Z[np.abs(Z) < opts.zero_tol] = 0.0
    Z = 0.5 * (Z + Z.T)
    if cholesky_logdet(Z) is None:
        # keep the ADMM support but restart Newton from a PD diagonal point
        start = np.diag(np.diag(X))
    else:
        start = Z

    trace: list[float] = []
    # polish well past the requested tolerance; Newton makes this cheap
    polish_target = min(target, 1e-12 * max(1.0, float(np.abs(sigma).max())))
    S, kkt, newton_it = _polish(start, sigma, V, polish_target, opts, trace)
    converged = kkt <= target
    if not converged:
        warnings.warn(
            f"weighted glasso stopped with KKT residual {0.5 * n * kkt:.3e} "
            f"> {opts.resolved_kkt_tol(n):.3e}",
            MaxIterationsExceeded,
            stacklevel=2,
        )
    obj_scale = 0.5 * n
    return GlassoSolution(
        S_hat=S,
        objective=obj_scale * trace[-1],
        kkt_residual=obj_scale * kkt,
        inner_iterations=admm_it + newton_it,
        converged=converged,
        admm_iterations=admm_it,
        newton_iterations=newton_it,
        objective_trace=[obj_scale * t for t in trace],
    )
