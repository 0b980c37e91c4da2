"""Ground-truth QKP models and simulated datasets.

Seeding: every trial ``t`` of an experiment with master seed ``s`` uses
``numpy.random.SeedSequence([s, t])``; the trial's child streams (edge sets,
values, samples) are spawned from it in a fixed order, so any single trial
can be regenerated on its own.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .matrix import (
    RNG_ALGORITHM,
    KroneckerShape,
    cholesky_logdet,
    sample_covariance,
    sample_gaussian,
    write_matrix,
)


@dataclass(frozen=True)
class EdgeSet:
    """Undirected edges on ``n`` nodes, stored 0-based as sorted pairs ``j < k``."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        clean = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError("self-loops are not edges")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge ({a}, {b}) out of range for {self.n} nodes")
            clean.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", tuple(sorted(clean)))

    def __len__(self):
        return len(self.edges)

    def indicator(self) -> np.ndarray:
        """Binary adjacency with unit diagonal."""
        E = np.eye(self.n, dtype=np.int8)
        for a, b in self.edges:
            E[a, b] = E[b, a] = 1
        return E


def edge_count(n: int, fraction: float) -> int:
    """``fraction * n(n-1)/2`` rounded half-up."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    pairs = n * (n - 1) // 2
    # round-half-up, tolerant of products like 0.2 * 45 = 9.000000000000002
    return int(np.floor(round(fraction * pairs, 9) + 0.5))


def random_edge_set(n: int, fraction: float, seed) -> EdgeSet:
    rng = np.random.Generator(np.random.PCG64(seed))
    r, c = np.triu_indices(n, k=1)
    pick = rng.choice(r.size, size=edge_count(n, fraction), replace=False)
    return EdgeSet(n, tuple(zip(r[pick].tolist(), c[pick].tolist())))


def kron_support(omega1: EdgeSet, omega2: EdgeSet, shape: KroneckerShape | None = None) -> np.ndarray:
    """``E = E_omega1 (x) E_omega2``, both factors with unit diagonal."""
    if shape is not None and (shape.m1, shape.m2) != (omega1.n, omega2.n):
        raise ValueError("edge sets do not match the shape")
    return np.kron(omega1.indicator(), omega2.indicator()).astype(np.int8)


def random_qkp_precision(E, seed, low: float = 0.3, high: float = 0.8, margin: float = 0.1,
                         max_tries: int = 10) -> np.ndarray:
    """Positive definite matrix with support exactly ``E``.

    Off-diagonal support entries are uniform on ``[-high, -low] U [low, high]``;
    the diagonal is the absolute row sum plus ``margin``, so the smallest
    eigenvalue is at least ``margin``.
    """
    E = np.asarray(E)
    if not (0 < low <= high) or margin <= 0:
        raise ValueError("need 0 < low <= high and margin > 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    m = E.shape[0]
    off = np.triu(E.astype(bool), k=1)
    for _ in range(max_tries):
        S = np.zeros((m, m))
        vals = rng.uniform(low, high, size=int(off.sum())) * rng.choice([-1.0, 1.0], size=int(off.sum()))
        S[off] = vals
        S = S + S.T
        np.fill_diagonal(S, np.abs(S).sum(axis=1) + margin)
        if np.array_equal(S != 0, E.astype(bool)) and cholesky_logdet(S) is not None:
            return S
    raise RuntimeError("could not generate a positive definite precision matrix")


@dataclass
class QkpModel:
    shape: KroneckerShape
    omega1: EdgeSet
    omega2: EdgeSet
    E: np.ndarray
    S_true: np.ndarray
    seed: object


@dataclass
class Trial:
    model: QkpModel
    data: np.ndarray
    sigma: np.ndarray
    n: int
    fraction: float


def trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), int(trial)])


def generate_trial(shape: KroneckerShape, fraction: float, n: int, seed) -> Trial:
    """Random QKP model, ``n`` samples from it and their sample covariance.

    ``seed`` is an int or a ``SeedSequence``.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s1, s2, s_val, s_data = ss.spawn(4)
    omega1 = random_edge_set(shape.m1, fraction, s1)
    omega2 = random_edge_set(shape.m2, fraction, s2)
    E = kron_support(omega1, omega2, shape)
    S_true = random_qkp_precision(E, s_val)
    data = sample_gaussian(S_true, n, s_data)
    sigma = sample_covariance(data)
    model = QkpModel(shape, omega1, omega2, E, S_true, _seed_repr(ss))
    return Trial(model, data, sigma, n, fraction)


def _seed_repr(ss: np.random.SeedSequence):
    return {"entropy": ss.entropy, "spawn_key": list(ss.spawn_key)}


def write_edges(path, edges: EdgeSet) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        for a, b in edges.edges:
            fh.write(f"{a + 1} {b + 1}\n")


def read_edges(path, n: int) -> EdgeSet:
    pairs = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            a, b = line.split()
            pairs.append((int(a) - 1, int(b) - 1))
    return EdgeSet(n, tuple(pairs))


def write_trial(directory, trial: Trial) -> Path:
    """Write S_true.csv, E.csv, omega1.edges, omega2.edges, data.csv, sigma.csv, meta.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    m = trial.model
    write_matrix(d / "S_true.csv", m.S_true)
    write_matrix(d / "E.csv", m.E, fmt="%d")
    write_edges(d / "omega1.edges", m.omega1)
    write_edges(d / "omega2.edges", m.omega2)
    write_matrix(d / "data.csv", trial.data)
    write_matrix(d / "sigma.csv", trial.sigma)
    meta = {
        "m1": m.shape.m1,
        "m2": m.shape.m2,
        "n": trial.n,
        "fraction": trial.fraction,
        "seed": m.seed,
        "rng": RNG_ALGORITHM,
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d
