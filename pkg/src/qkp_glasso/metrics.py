"""Support extraction and reconstruction errors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TAU = 1e-6


def extract_support(S, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Binary support of ``S``.

    Off-diagonal ``(a, b)`` is in the support iff ``|s_ab| > tau * scale``
    with ``scale = max(max_a |s_aa|, 1)``.  The diagonal is always included.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    S = np.asarray(S, dtype=float)
    scale = max(float(np.abs(np.diag(S)).max()), 1.0)
    E = (np.abs(S) > tau * scale).astype(np.int8)
    np.fill_diagonal(E, 1)
    return E


def relative_error(S_true, S_hat) -> float:
    """``||S_true - S_hat||_F / ||S_true||_F``."""
    S_true, S_hat = np.asarray(S_true, float), np.asarray(S_hat, float)
    if S_true.shape != S_hat.shape:
        raise ValueError("shape mismatch")
    denom = np.linalg.norm(S_true)
    if denom == 0:
        raise ValueError("S_true is zero")
    return float(np.linalg.norm(S_true - S_hat) / denom)


def sparsity_error(E_true, E_hat) -> float:
    """``||E_true - E_hat||_F / (m(m+1)/2)``.

    The numerator is the square root of the number of mismatched entries,
    the denominator a count; kept as is because it is the reported metric.
    """
    E_true, E_hat = np.asarray(E_true, float), np.asarray(E_hat, float)
    if E_true.shape != E_hat.shape:
        raise ValueError("shape mismatch")
    m = E_true.shape[0]
    return float(np.linalg.norm(E_true - E_hat) / (m * (m + 1) / 2))


def mismatch_fraction(E_true, E_hat) -> float:
    """Share of upper-triangular off-diagonal pairs classified wrongly."""
    E_true, E_hat = np.asarray(E_true), np.asarray(E_hat)
    m = E_true.shape[0]
    if m < 2:
        return 0.0
    iu = np.triu_indices(m, k=1)
    return float(np.mean(E_true[iu] != E_hat[iu]))


@dataclass(frozen=True)
class TrialErrors:
    estimator: str
    e_rel: float
    e_sp: float
    mismatch: float
    true_positives: int
    false_positives: int
    false_negatives: int


def trial_errors(estimator: str, S_true, E_true, S_hat, tau: float = DEFAULT_TAU) -> tuple[TrialErrors, np.ndarray]:
    """Errors of one estimate; also returns the estimated support.

    Edge counts are over upper-triangular off-diagonal pairs.
    """
    E_hat = extract_support(S_hat, tau)
    E_true = np.asarray(E_true)
    iu = np.triu_indices(E_true.shape[0], k=1)
    t, e = E_true[iu].astype(bool), E_hat[iu].astype(bool)
    errs = TrialErrors(
        estimator=estimator,
        e_rel=relative_error(S_true, S_hat),
        e_sp=sparsity_error(E_true, E_hat),
        mismatch=mismatch_fraction(E_true, E_hat),
        true_positives=int(np.sum(t & e)),
        false_positives=int(np.sum(~t & e)),
        false_negatives=int(np.sum(t & ~e)),
    )
    return errs, E_hat
