"""Latent class model: parameters, population quantities and sampling.

Labels are 0-based internally; files written by the CLI use 1-based labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rng import stream

RANK_TOL = 1e-8


class ModelError(ValueError):
    """Invalid model parameters or response data."""


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Observed N x J responses with entries in {0, ..., m_levels}."""

    entries: np.ndarray
    m_levels: int

    def __post_init__(self):
        r = np.asarray(self.entries)
        if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] < 1:
            raise ModelError(f"response matrix must be 2-D and non-empty, got shape {r.shape}")
        if int(self.m_levels) < 1:
            raise ModelError(f"m_levels must be a positive integer, got {self.m_levels}")
        if not np.issubdtype(r.dtype, np.integer):
            if not np.all(np.isfinite(r)) or np.any(r != np.round(r)):
                raise ModelError("response entries must be integers")
            r = r.astype(np.int64)
        bad = np.argwhere((r < 0) | (r > self.m_levels))
        if bad.size:
            i, j = bad[0]
            raise ModelError(
                f"entry ({i + 1},{j + 1}) = {r[i, j]} outside {{0,...,{self.m_levels}}}"
            )
        r = r.astype(np.int64, copy=True)
        r.setflags(write=False)
        object.__setattr__(self, "entries", r)
        object.__setattr__(self, "m_levels", int(self.m_levels))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True, eq=False)
class Labeling:
    """Class assignment of N subjects to k classes (0-based labels)."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1 or lab.size == 0:
            raise ModelError("labels must be a non-empty 1-D vector")
        if not np.issubdtype(lab.dtype, np.integer):
            raise ModelError("labels must be integers")
        k = int(self.k)
        if k < 1:
            raise ModelError(f"k must be >= 1, got {k}")
        if lab.min() < 0 or lab.max() >= k:
            raise ModelError(f"labels must lie in 0..{k - 1}")
        lab = lab.astype(np.int64, copy=True)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "k", k)

    @classmethod
    def from_one_hot(cls, z) -> "Labeling":
        z = np.asarray(z)
        if z.ndim != 2 or not np.all(z.sum(axis=1) == 1) or not np.all((z == 0) | (z == 1)):
            raise ModelError("one-hot matrix must be 0/1 with exactly one 1 per row")
        return cls(np.argmax(z, axis=1), z.shape[1])

    @classmethod
    def from_one_based(cls, labels, k: int | None = None) -> "Labeling":
        lab = np.asarray(labels, dtype=np.int64) - 1
        return cls(lab, int(lab.max()) + 1 if k is None else k)

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def one_hot(self) -> np.ndarray:
        z = np.zeros((self.n, self.k))
        z[np.arange(self.n), self.labels] = 1.0
        return z

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    @property
    def empty_classes(self) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.sizes == 0)]

    @property
    def representatives(self) -> np.ndarray:
        """First subject of each class, so that ``one_hot[representatives] == I``."""
        if self.empty_classes:
            raise ModelError(f"classes {self.empty_classes} are empty")
        _, first = np.unique(self.labels, return_index=True)
        return first

    def one_based(self) -> list[int]:
        return [int(x) + 1 for x in self.labels]


@dataclass(frozen=True, eq=False)
class ItemParams:
    """J x K item parameter matrix; theta[j, k] is class k's mean response to item j."""

    theta: np.ndarray
    m_levels: int

    def __post_init__(self):
        t = np.array(self.theta, dtype=float)
        if t.ndim != 2 or t.size == 0:
            raise ModelError("theta must be a non-empty J x K matrix")
        if np.any(t < 0) or np.any(t > self.m_levels):
            raise ModelError(f"theta entries must lie in [0, {self.m_levels}]")
        t.setflags(write=False)
        object.__setattr__(self, "theta", t)
        object.__setattr__(self, "m_levels", int(self.m_levels))

    @property
    def rho(self) -> float:
        return sparsity(self)

    @property
    def b(self) -> np.ndarray:
        if self.rho <= 0:
            raise ModelError("B = theta / rho is undefined for an all-zero theta")
        return self.theta / self.rho

    @property
    def sigma_k(self) -> float:
        """K-th largest singular value of B (0 when K > J or theta is zero)."""
        j, k = self.theta.shape
        if k > j or self.rho <= 0:
            return 0.0
        return float(np.linalg.svd(self.b, compute_uv=False)[k - 1])


@dataclass(frozen=True, eq=False)
class PopulationModel:
    labeling: Labeling
    items: ItemParams
    check_rank: bool = field(default=True)

    def __post_init__(self):
        if self.labeling.k != self.items.theta.shape[1]:
            raise ModelError(
                f"labeling has k={self.labeling.k} but theta has {self.items.theta.shape[1]} columns"
            )
        if self.labeling.empty_classes:
            raise ModelError(f"classes {self.labeling.empty_classes} have no subjects")
        if self.check_rank and self.items.sigma_k <= RANK_TOL:
            raise ModelError(f"theta is not of full column rank (sigma_K(B) <= {RANK_TOL})")

    @property
    def n(self) -> int:
        return self.labeling.n

    @property
    def j(self) -> int:
        return self.items.theta.shape[0]

    @property
    def k(self) -> int:
        return self.labeling.k

    @property
    def m_levels(self) -> int:
        return self.items.m_levels

    @property
    def rho(self) -> float:
        return self.items.rho

    @cached_property
    def expected(self) -> np.ndarray:
        return expected_responses(self)

    @property
    def degrees(self) -> np.ndarray:
        return self.expected.sum(axis=1)

    @property
    def delta_min(self) -> float:
        return float(self.degrees.min())

    @property
    def delta_max(self) -> float:
        return float(self.degrees.max())


def sparsity(items: ItemParams) -> float:
    return float(np.max(items.theta))


def expected_responses(model: PopulationModel) -> np.ndarray:
    """Population response matrix Z @ theta.T; row i is theta[:, label_i]."""
    return model.items.theta.T[model.labeling.labels].copy()


def sample_binomial(p: np.ndarray, m_levels: int, rng: np.random.Generator) -> np.ndarray:
    """Draw Binomial(m_levels, p) elementwise as a sum of m_levels Bernoulli layers.

    Layer t consumes one ``rng.random(p.shape)`` call, in order t = 0..M-1.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ModelError("success probabilities must lie in [0, 1]")
    out = np.zeros(p.shape, dtype=np.int64)
    for _ in range(m_levels):
        out += rng.random(p.shape) < p
    return out


def sample_response(model: PopulationModel, seed: int) -> ResponseMatrix:
    m = model.m_levels
    r = sample_binomial(model.expected / m, m, stream(seed))
    return ResponseMatrix(r, m)


def random_labeling(n: int, k: int, rng: np.random.Generator, max_tries: int = 10_000) -> Labeling:
    """Equal-probability class labels, redrawn until every class is occupied."""
    if k > n:
        raise ModelError(f"cannot fill {k} classes with {n} subjects")
    for _ in range(max_tries):
        labels = rng.integers(0, k, size=n)
        if np.bincount(labels, minlength=k).min() > 0:
            return Labeling(labels, k)
    raise ModelError(f"could not draw a labeling with all {k} classes occupied")


def sample_synthetic(n: int, j: int, k: int, m_levels: int, rho: float, seed: int):
    """Simulate (labeling, item params, responses) the way the numerical studies do.

    B~ has i.i.d. Uniform[0, 1) entries, B = B~ / max(B~) and theta = rho * B.
    Labels, B~ and R are drawn from one stream in that order.
    """
    if not 0 < rho <= m_levels:
        raise ModelError(f"rho must lie in (0, {m_levels}], got {rho}")
    if min(n, j, k, m_levels) < 1:
        raise ModelError("n, j, k and m_levels must be positive")
    if k > min(n, j):
        raise ModelError(f"k={k} exceeds min(n, j)={min(n, j)}")
    rng = stream(seed)
    labeling = random_labeling(n, k, rng)
    b = rng.random((j, k))
    # Uniform[0,1) can return exactly 0; theta must stay strictly positive.
    while np.any(b == 0):
        b[b == 0] = rng.random(int(np.sum(b == 0)))
    b = b / b.max()
    items = ItemParams(rho * b, m_levels)
    model = PopulationModel(labeling, items, check_rank=False)
    r = sample_binomial(model.expected / m_levels, m_levels, rng)
    return labeling, items, ResponseMatrix(r, m_levels)
