"""Accuracy metrics, Newman-Girvan modularity and selection of the class count."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .estimators import EstimationError, Method, default_tau, fit
from .model import Labeling
from .rng import substream_seed

EXHAUSTIVE_MAX_K = 8


@dataclass(frozen=True)
class MetricsReport:
    clustering_error: float
    hamming_error: float
    nmi: float
    ari: float
    rel_l1: float
    rel_l2: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


METRIC_NAMES = ("clustering_error", "hamming_error", "nmi", "ari", "rel_l1", "rel_l2")


def _pair(truth: Labeling, est: Labeling, same_k: bool = True):
    if truth.n != est.n:
        raise ValueError(f"labelings differ in length: {truth.n} vs {est.n}")
    if same_k and truth.k != est.k:
        raise ValueError(f"labelings differ in k: {truth.k} vs {est.k}")


def confusion(truth: Labeling, est: Labeling) -> np.ndarray:
    """Contingency table with truth classes on rows and estimated classes on columns."""
    c = np.zeros((truth.k, est.k), dtype=np.int64)
    np.add.at(c, (truth.labels, est.labels), 1)
    return c


def clustering_error(truth: Labeling, est: Labeling) -> float:
    """Minimax over classes of the symmetric difference, relative to the true class size.

    Minimized over all K! relabelings of the estimate; K > 8 is rejected.
    """
    _pair(truth, est)
    k = truth.k
    if k > EXHAUSTIVE_MAX_K:
        raise ValueError(f"clustering_error is exhaustive over K! relabelings; K={k} > {EXHAUSTIVE_MAX_K}")
    sizes = truth.sizes
    if np.any(sizes == 0):
        raise ValueError("every true class must be non-empty")
    c = confusion(truth, est)
    est_sizes = c.sum(axis=0)
    # symdiff[a, b] = |C_a \ Chat_b| + |Chat_b \ C_a|
    symdiff = sizes[:, None] + est_sizes[None, :] - 2 * c
    ratio = symdiff / sizes[:, None]
    rows = np.arange(k)
    return float(min(ratio[rows, list(p)].max() for p in itertools.permutations(range(k))))


def _best_matching(score: np.ndarray) -> float:
    """Maximum over permutations of sum_a score[a, p(a)]."""
    k = score.shape[0]
    if k <= EXHAUSTIVE_MAX_K:
        rows = np.arange(k)
        return float(max(score[rows, list(p)].sum() for p in itertools.permutations(range(k))))
    r, c = linear_sum_assignment(score, maximize=True)
    return float(score[r, c].sum())


def hamming_error(truth: Labeling, est: Labeling) -> float:
    _pair(truth, est)
    return (truth.n - _best_matching(confusion(truth, est))) / truth.n


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return -math.fsum(p * np.log(p))


def nmi(truth: Labeling, est: Labeling) -> float:
    """Mutual information normalized by the arithmetic mean of the two entropies.

    Two single-cluster partitions score 1.
    """
    _pair(truth, est, same_k=False)
    n = truth.n
    c = confusion(truth, est)
    a, b = c.sum(axis=1), c.sum(axis=0)
    ha, hb = _entropy(a, n), _entropy(b, n)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    nz = c > 0
    outer = np.outer(a, b)[nz]
    # fsum is exactly rounded, so the score does not depend on label order
    mi = math.fsum(c[nz] / n * (np.log(c[nz] * n) - np.log(outer)))
    return float(min(max(mi / ((ha + hb) / 2.0), 0.0), 1.0))


def ari(truth: Labeling, est: Labeling) -> float:
    """Hubert-Arabie adjusted Rand index."""
    _pair(truth, est, same_k=False)
    c = confusion(truth, est)
    pairs = lambda x: int(np.sum(x * (x - 1) // 2))  # noqa: E731
    index = pairs(c)
    sum_a, sum_b = pairs(c.sum(axis=1)), pairs(c.sum(axis=0))
    total = truth.n * (truth.n - 1) // 2
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


def relative_errors(theta, theta_hat) -> tuple[float, float]:
    """Relative entrywise-l1 and Frobenius errors, each minimized over column permutations."""
    theta = np.asarray(getattr(theta, "theta", theta), dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta.shape != theta_hat.shape:
        raise ValueError(f"shape mismatch: {theta.shape} vs {theta_hat.shape}")
    l1_norm, fro_norm = np.abs(theta).sum(), np.linalg.norm(theta)
    if l1_norm == 0:
        raise ValueError("theta is identically zero")
    # cost[a, b]: theta column a placed where theta_hat has column b
    diff = theta_hat[:, None, :] - theta[:, :, None]
    l1_cost = np.abs(diff).sum(axis=0)
    l2_cost = (diff**2).sum(axis=0)
    l1 = -_best_matching(-l1_cost)
    l2 = max(-_best_matching(-l2_cost), 0.0)
    return float(l1 / l1_norm), float(math.sqrt(l2) / fro_norm)


def score(truth: Labeling, est: Labeling, theta, theta_hat) -> MetricsReport:
    l1, l2 = relative_errors(theta, theta_hat)
    return MetricsReport(clustering_error(truth, est), hamming_error(truth, est),
                         nmi(truth, est), ari(truth, est), l1, l2)


# ------------------------------------------------------------------ modularity


def adjacency(r) -> np.ndarray:
    """Co-response matrix A = R R' (diagonal kept as is)."""
    r = np.asarray(getattr(r, "entries", r))
    return r @ r.T


def modularity(a, labeling: Labeling) -> float:
    a = np.asarray(a, dtype=float)
    if a.shape != (labeling.n, labeling.n):
        raise ValueError(f"adjacency shape {a.shape} does not match {labeling.n} subjects")
    d = a.sum(axis=1)
    two_w = d.sum()
    if two_w <= 0:
        raise ValueError("modularity is undefined for an all-zero adjacency matrix")
    z = labeling.one_hot
    within = float(np.sum(z * (a @ z)))
    class_deg = z.T @ d
    return float((within - np.sum(class_deg**2) / two_w) / two_w)


def response_modularity(r, labeling: Labeling) -> float:
    """Modularity of ``labeling`` on A = R R' without forming the N x N matrix A."""
    r = np.asarray(getattr(r, "entries", r), dtype=float)
    if r.shape[0] != labeling.n:
        raise ValueError(f"r has {r.shape[0]} rows, labeling has {labeling.n} subjects")
    col = r.sum(axis=0)
    d = r @ col
    two_w = float(col @ col)
    if two_w <= 0:
        raise ValueError("modularity is undefined for an all-zero response matrix")
    z = labeling.one_hot
    class_resp = z.T @ r
    within = float(np.sum(class_resp**2))
    class_deg = z.T @ d
    return (within - float(np.sum(class_deg**2)) / two_w) / two_w


@dataclass
class ModularityProfile:
    q_values: dict[int, float | None]
    k_hat: int
    method: Method
    failures: dict[int, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "method": self.method.value,
            "k_hat": self.k_hat,
            "q": [{"k": k, "Q": q} for k, q in sorted(self.q_values.items())],
            "failures": [{"k": k, "error": msg} for k, msg in sorted(self.failures.items())],
        }


def default_k_max(n: int, j: int) -> int:
    return min(12, n, j)


def estimate_k(r, method: Method | str, k_max: int | None = None,
               tau_rule: Callable[[int, int, int], float] = default_tau, seed: int = 0,
               repeats: int = 1, *, m_levels: int | None = None) -> ModularityProfile:
    """Pick k in 1..k_max maximizing the modularity of the method's partition.

    Q(1) is 0 by definition.  Each (k, repeat) gets its own seed substream
    and Q(k) is the mean over ``repeats``.  A run that fails at some k is
    recorded in ``failures`` with Q(k) = None.  Ties go to the smaller k.
    """
    method = Method(method)
    entries = np.asarray(getattr(r, "entries", r), dtype=float)
    if m_levels is None:
        m_levels = getattr(r, "m_levels", None)
    if m_levels is None:
        raise ValueError("m_levels is required when r is a plain array")
    n, j = entries.shape
    if k_max is None:
        k_max = default_k_max(n, j)
    if not 1 <= k_max <= min(n, j):
        raise ValueError(f"k_max must lie in [1, {min(n, j)}], got {k_max}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if not np.any(entries):
        raise ValueError("modularity is undefined for an all-zero response matrix")
    tau = tau_rule(n, j, m_levels) if method.uses_tau else None
    q_values: dict[int, float | None] = {1: 0.0}
    failures: dict[int, str] = {}
    for k in range(2, k_max + 1):
        qs = []
        try:
            for rep in range(repeats):
                res = fit(entries, k, method, tau, substream_seed(seed, k, rep), m_levels=m_levels)
                qs.append(response_modularity(entries, res.labeling))
        except (EstimationError, ValueError, np.linalg.LinAlgError) as exc:
            failures[k] = f"{type(exc).__name__}: {exc}"
            q_values[k] = None
            continue
        q_values[k] = float(np.mean(qs))
    best_k, best_q = 1, 0.0
    for k in range(2, k_max + 1):
        q = q_values[k]
        if q is not None and q > best_q:
            best_k, best_q = k, q
    return ModularityProfile(q_values, best_k, method, failures)
