"""The six latent class estimators and item-parameter recovery.

Every estimator accepts either a :class:`ResponseMatrix` or a real-valued
N x J array (with ``m_levels`` given).  Passing the population matrix
``Z @ theta.T`` runs the ideal version of the algorithm.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import Labeling
from .spectral import kmeans_fit, ratio_embedding, regularized_laplacian, row_normalize, top_k_svd


class EstimationError(RuntimeError):
    """An estimator could not produce a valid result (e.g. an empty class)."""


class Method(str, Enum):
    RSC = "rsc"
    RSCN = "rscn"
    RSCORS = "rscors"
    PCA = "pca"
    RMK = "rmk"
    RLMK = "rlmk"

    @property
    def display(self) -> str:
        return {"rsc": "LCA-RSC", "rscn": "LCA-RSCn", "rscors": "LCA-RSCORS",
                "pca": "LCA-PCA", "rmk": "LCA-RMK", "rlmk": "LCA-RLMK"}[self.value]

    @property
    def uses_tau(self) -> bool:
        return self in (Method.RSC, Method.RSCN, Method.RSCORS, Method.RLMK)


@dataclass(frozen=True, eq=False)
class EstimationResult:
    labeling: Labeling
    theta_hat: np.ndarray
    method: Method
    tau: float | None
    k: int


def default_tau(n: int, j: int, m_levels: int) -> float:
    if min(n, j, m_levels) < 1:
        raise ValueError("n, j and m_levels must be positive")
    return float(m_levels * max(n, j))


def _unpack(r, m_levels):
    if hasattr(r, "entries"):
        return np.asarray(r.entries, dtype=float), int(r.m_levels)
    if m_levels is None:
        raise ValueError("m_levels is required when r is a plain array")
    r = np.asarray(r, dtype=float)
    if r.ndim != 2:
        raise ValueError("r must be a 2-D matrix")
    return r, int(m_levels)


def recover_theta(r, labeling: Labeling, m_levels: int | None = None) -> np.ndarray:
    """Class-wise column means of ``r``, clipped to [0, M]."""
    r, m = _unpack(r, m_levels)
    if labeling.n != r.shape[0]:
        raise ValueError(f"labeling has {labeling.n} subjects, r has {r.shape[0]} rows")
    sizes = labeling.sizes
    if np.any(sizes == 0):
        raise EstimationError(f"estimated class(es) {labeling.empty_classes} are empty")
    sums = np.zeros((labeling.k, r.shape[1]))
    np.add.at(sums, labeling.labels, r)
    return np.clip((sums / sizes[:, None]).T, 0.0, m)


def _check_k(r: np.ndarray, k: int) -> None:
    if not 1 <= k <= min(r.shape):
        raise ValueError(f"k must lie in [1, min(N, J)] = [1, {min(r.shape)}], got {k}")


def _cluster(points: np.ndarray, k: int, seed: int) -> Labeling:
    return Labeling(kmeans_fit(points, k, seed=seed).labels, k)


def _finish(r, m, labeling, method, tau, k) -> EstimationResult:
    return EstimationResult(labeling, recover_theta(r, labeling, m), method, tau, k)


def _spectral_u(r, k, tau):
    return top_k_svd(regularized_laplacian(r, tau), k).u


def lca_rsc(r, k: int, tau: float, seed: int = 0, *, m_levels: int | None = None) -> EstimationResult:
    r, m = _unpack(r, m_levels)
    _check_k(r, k)
    labeling = _cluster(_spectral_u(r, k, tau), k, seed)
    return _finish(r, m, labeling, Method.RSC, float(tau), k)


def lca_rscn(r, k: int, tau: float, seed: int = 0, *, m_levels: int | None = None) -> EstimationResult:
    """Cluster the row-normalized singular vectors.

    Subjects whose embedding row is numerically zero are left out of k-means
    and then attached to the nearest centroid.
    """
    r, m = _unpack(r, m_levels)
    _check_k(r, k)
    u_star, zero = row_normalize(_spectral_u(r, k, tau))
    keep = ~zero
    if zero.any() and keep.sum() >= k:
        fit = kmeans_fit(u_star[keep], k, seed=seed)
        labels = np.empty(r.shape[0], dtype=np.int64)
        labels[keep] = fit.labels
        d = np.sum((u_star[zero][:, None, :] - fit.centers[None, :, :]) ** 2, axis=2)
        labels[zero] = np.argmin(d, axis=1)
        labeling = Labeling(labels, k)
    else:
        labeling = _cluster(u_star, k, seed)
    return _finish(r, m, labeling, Method.RSCN, float(tau), k)


def lca_rscors(r, k: int, tau: float, seed: int = 0, *, m_levels: int | None = None) -> EstimationResult:
    r, m = _unpack(r, m_levels)
    _check_k(r, k)
    if k < 2:
        raise ValueError("LCA-RSCORS needs k >= 2; use lca_rsc for a single class")
    labeling = _cluster(ratio_embedding(_spectral_u(r, k, tau)), k, seed)
    return _finish(r, m, labeling, Method.RSCORS, float(tau), k)


def lca_pca(r, k: int, seed: int = 0, *, m_levels: int | None = None) -> EstimationResult:
    r, m = _unpack(r, m_levels)
    _check_k(r, k)
    labeling = _cluster(top_k_svd(r, k).u, k, seed)
    return _finish(r, m, labeling, Method.PCA, None, k)


def lca_rmk(r, k: int, seed: int = 0, *, m_levels: int | None = None) -> EstimationResult:
    r, m = _unpack(r, m_levels)
    _check_k(r, k)
    return _finish(r, m, _cluster(r, k, seed), Method.RMK, None, k)


def lca_rlmk(r, k: int, tau: float, seed: int = 0, *, m_levels: int | None = None) -> EstimationResult:
    r, m = _unpack(r, m_levels)
    _check_k(r, k)
    labeling = _cluster(regularized_laplacian(r, tau), k, seed)
    return _finish(r, m, labeling, Method.RLMK, float(tau), k)


def fit(r, k: int, method: Method | str, tau: float | None = None, seed: int = 0,
        *, m_levels: int | None = None) -> EstimationResult:
    """Dispatch to one estimator by name.

    ``tau`` is required for the Laplacian-based methods and ignored by
    ``pca`` and ``rmk``.
    """
    method = Method(method)
    if method.uses_tau:
        if tau is None:
            raise ValueError(f"{method.display} requires tau (see default_tau)")
        return _TAU_METHODS[method](r, k, tau, seed, m_levels=m_levels)
    return _PLAIN_METHODS[method](r, k, seed, m_levels=m_levels)


_TAU_METHODS = {Method.RSC: lca_rsc, Method.RSCN: lca_rscn, Method.RSCORS: lca_rscors, Method.RLMK: lca_rlmk}
_PLAIN_METHODS = {Method.PCA: lca_pca, Method.RMK: lca_rmk}
