"""Dense symmetric-matrix kernel.

Block coordinates follow the module/node convention: for a matrix of size
``m1*m2``, the entry ``(j, k, i, l)`` (module pair ``j, k``, node pair
``i, l``) lives at flat position ``((j-1)*m2 + i, (k-1)*m2 + l)`` in 1-based
terms.  Internally everything is 0-based and :func:`to_blocks` gives a
``[j, k, i, l]`` view.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

RNG_ALGORITHM = "numpy.random.PCG64"


class NotPositiveDefinite(ValueError):
    """Raised when a matrix required to be positive definite is not."""


@dataclass(frozen=True)
class KroneckerShape:
    """Number of modules ``m1`` and nodes per module ``m2``."""

    m1: int
    m2: int

    def __post_init__(self):
        if int(self.m1) < 1 or int(self.m2) < 1:
            raise ValueError(f"shape must be positive, got ({self.m1}, {self.m2})")

    @property
    def m(self) -> int:
        return self.m1 * self.m2

    def block_index(self, j: int, k: int, i: int, l: int) -> tuple[int, int]:
        """1-based flat position of block entry ``(j, k, i, l)``."""
        if not (1 <= j <= self.m1 and 1 <= k <= self.m1):
            raise IndexError(f"module index out of range 1..{self.m1}: ({j}, {k})")
        if not (1 <= i <= self.m2 and 1 <= l <= self.m2):
            raise IndexError(f"node index out of range 1..{self.m2}: ({i}, {l})")
        return (j - 1) * self.m2 + i, (k - 1) * self.m2 + l


def block_index(shape: KroneckerShape, j: int, k: int, i: int, l: int) -> tuple[int, int]:
    return shape.block_index(j, k, i, l)


def to_blocks(S: np.ndarray, shape: KroneckerShape) -> np.ndarray:
    """View ``S`` as a 4-d array indexed ``[j, k, i, l]`` (0-based)."""
    S = np.asarray(S)
    if S.shape != (shape.m, shape.m):
        raise ValueError(f"expected {shape.m}x{shape.m} matrix, got {S.shape}")
    return S.reshape(shape.m1, shape.m2, shape.m1, shape.m2).transpose(0, 2, 1, 3)


def from_blocks(B: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_blocks`."""
    m1, _, m2, _ = B.shape
    return np.ascontiguousarray(B.transpose(0, 2, 1, 3)).reshape(m1 * m2, m1 * m2)


def as_symmetric(A, *, atol: float = 1e-12) -> np.ndarray:
    """Return a float copy of ``A`` that is exactly symmetric.

    Matrices that are symmetric up to ``atol`` (relative to their largest
    entry) are averaged with their transpose; anything else is rejected.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > atol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (A + A.T)


def cholesky_logdet(S: np.ndarray):
    """Cholesky factor and log-determinant of ``S``.

    Returns ``(L, logdet)`` with ``L`` lower triangular, or ``None`` when
    ``S`` is not positive definite.  Line searches rely on the ``None``
    return, so no exception is raised for that case.
    """
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(L)
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        return None
    return L, 2.0 * float(np.sum(np.log(d)))


def is_positive_definite(S: np.ndarray) -> bool:
    return cholesky_logdet(S) is not None


def logdet(S: np.ndarray) -> float:
    res = cholesky_logdet(S)
    if res is None:
        raise NotPositiveDefinite("matrix is not positive definite")
    return res[1]


def sample_covariance(data: np.ndarray) -> np.ndarray:
    """``(1/N) sum_k x_k x_k^T`` without centering (the model is zero-mean)."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"data must be a non-empty N x m array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data has non-finite entries")
    C = X.T @ X / X.shape[0]
    return 0.5 * (C + C.T)


def sample_gaussian(S_true: np.ndarray, n: int, seed) -> np.ndarray:
    """Draw ``n`` samples from ``N(0, S_true^{-1})``.

    ``S_true`` is the concentration matrix.  With ``S_true = L L^T`` the
    samples are ``L^{-T} z`` for standard normal ``z``, so the covariance is
    never formed by general inversion.
    """
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    res = cholesky_logdet(np.asarray(S_true, dtype=float))
    if res is None:
        raise NotPositiveDefinite("S_true is not positive definite")
    L, _ = res
    rng = np.random.Generator(np.random.PCG64(seed))
    Z = rng.standard_normal((L.shape[0], n))
    X = linalg.solve_triangular(L, Z, lower=True, trans="T")
    return np.ascontiguousarray(X.T)


def read_matrix(path) -> np.ndarray:
    """Read a headerless comma-separated matrix."""
    A = np.loadtxt(Path(path), delimiter=",", ndmin=2, dtype=float)
    return A


def write_matrix(path, A, fmt: str = "%.17g") -> None:
    A = np.atleast_2d(np.asarray(A))
    with open(Path(path), "w", newline="\n", encoding="ascii") as fh:
        for row in A:
            fh.write(",".join(fmt % v for v in row))
            fh.write("\n")
