"""Initial QKP hyperparameters from a log-domain Kronecker fit of abs(Sigma^-1)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .matrix import KroneckerShape, NotPositiveDefinite, as_symmetric, cholesky_logdet


def _vec(A):
    return np.asarray(A).flatten(order="F")


def _unvec(z, n):
    return z.reshape(n, n, order="F")


def kron_design_matrix(shape: KroneckerShape) -> np.ndarray:
    """Design matrix ``A`` with ``A [vec W; vec Y] = vec(W (x) 11' + 11' (x) Y)``.

    Entry ``(jk, il)`` of the fitted matrix is ``w_jk + y_il``, i.e. the
    entrywise log of ``exp(W) (x) exp(Y)``.
    """
    m1, m2 = shape.m1, shape.m2
    I1, I2 = np.eye(m1), np.eye(m2)
    o1, o2 = np.ones((m1, 1)), np.ones((m2, 1))
    A_w = np.kron(np.kron(np.kron(I1, o2), I1), o2)
    A_y = np.kron(np.kron(np.kron(o1, I2), o1), I2)
    return np.hstack([A_w, A_y])


def kron_log_lstsq(M, shape: KroneckerShape):
    """Minimum-norm least-squares fit ``log M ~ W (x) 11' + 11' (x) Y``.

    ``A`` has a one-dimensional null space (``W + c``, ``Y - c``), so the
    normal equations are singular; the minimum-norm solution is returned.

    Returns
    -------
    W : (m1, m1) array
    Y : (m2, m2) array
    residual : float
        ``||A z - b||_2``.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (shape.m, shape.m):
        raise ValueError(f"expected {shape.m}x{shape.m} matrix, got {M.shape}")
    if not np.all(M > 0):
        raise ValueError("log-domain fit needs strictly positive entries")
    A = kron_design_matrix(shape)
    b = _vec(np.log(M))
    # the null-space singular value is round-off, not exactly zero
    z, *_ = linalg.lstsq(A, b, cond=1e-10, lapack_driver="gelsd")
    residual = float(np.linalg.norm(A @ z - b))
    n1 = shape.m1 * shape.m1
    return _unvec(z[:n1], shape.m1), _unvec(z[n1:], shape.m2), residual


@dataclass(frozen=True)
class KronInitResult:
    W_bar: np.ndarray
    Y_bar: np.ndarray
    residual: float
    lam0: np.ndarray
    gam0: np.ndarray
    W_log: np.ndarray
    Y_log: np.ndarray
    eps: float


def init_hyperparams(sigma, shape: KroneckerShape, eps: float | None = None) -> KronInitResult:
    """Initial ``Lambda``, ``Gamma`` for the QKP estimator.

    Fits ``W_bar (x) Y_bar ~ abs(Sigma^-1) + eps 11'`` in the log domain,
    symmetrizes after exponentiating, and inverts entrywise.  ``eps``
    defaults to ``1e-3 * max abs(Sigma^-1)``.
    """
    sigma = as_symmetric(sigma)
    res = cholesky_logdet(sigma)
    if res is None:
        raise NotPositiveDefinite("sample covariance is not positive definite")
    P = linalg.cho_solve((res[0], True), np.eye(sigma.shape[0]))
    absP = np.abs(0.5 * (P + P.T))
    if eps is None:
        eps = 1e-3 * float(absP.max())
    if eps <= 0:
        raise ValueError("eps must be positive")
    W, Y, residual = kron_log_lstsq(absP + eps, shape)
    eW, eY = np.exp(W), np.exp(Y)
    W_bar = 0.5 * (eW + eW.T)
    Y_bar = 0.5 * (eY + eY.T)
    return KronInitResult(
        W_bar=W_bar,
        Y_bar=Y_bar,
        residual=residual,
        lam0=1.0 / W_bar,
        gam0=1.0 / Y_bar,
        W_log=W,
        Y_log=Y,
        eps=float(eps),
    )
