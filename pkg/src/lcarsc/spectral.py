"""Regularized Laplacians, truncated SVD, spectral embeddings and k-means."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import Labeling
from .rng import stream

ZERO_ROW_FLOOR = 1e-12
RATIO_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def k(self) -> int:
        return self.sigma.size

    @property
    def u_star(self) -> np.ndarray:
        return row_normalize(self.u)[0]

    @property
    def xi(self) -> np.ndarray:
        return ratio_embedding(self.u)


def _as_float(m) -> np.ndarray:
    return np.asarray(getattr(m, "entries", m), dtype=float)


def degree_vector(r) -> np.ndarray:
    return _as_float(r).sum(axis=1)


def regularized_laplacian(r, tau: float) -> np.ndarray:
    """Scale row i of ``r`` by 1 / sqrt(tau + rowsum_i)."""
    r = _as_float(r)
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    d = tau + r.sum(axis=1)
    if tau == 0:
        zero = np.flatnonzero(d <= 0)
        if zero.size:
            raise ValueError(f"tau=0 needs positive row sums; row {zero[0] + 1} sums to {d[zero[0]]}")
    scale = np.zeros_like(d)
    pos = d > 0
    scale[pos] = 1.0 / np.sqrt(d[pos])
    return r * scale[:, None]


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    idx = np.argmax(np.abs(u), axis=0)
    flip = u[idx, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1
    v[:, flip] *= -1


def top_k_svd(m, k: int) -> SpectralEmbedding:
    """Leading ``k`` singular triplets of ``m``.

    The dominant subspace comes from a symmetric eigendecomposition of the
    Gram matrix on the smaller side; projecting ``m`` onto it and taking a
    thin SVD of the N x k (or J x k) projection then gives exactly
    orthonormal factors on both sides.  Each left vector is signed so that
    its largest-magnitude entry (lowest index on ties) is positive.
    """
    m = _as_float(m)
    n, j = m.shape
    if not 1 <= k <= min(n, j):
        raise ValueError(f"k must lie in [1, {min(n, j)}], got {k}")
    small = min(n, j)
    if n >= j:
        gram = m.T @ m
        _, w = scipy.linalg.eigh(gram, subset_by_index=[small - k, small - 1])
        w = w[:, ::-1]
        uy, s, wt = np.linalg.svd(m @ w, full_matrices=False)
        u, v = uy, w @ wt.T
    else:
        gram = m @ m.T
        _, w = scipy.linalg.eigh(gram, subset_by_index=[small - k, small - 1])
        w = w[:, ::-1]
        vy, s, wt = np.linalg.svd(m.T @ w, full_matrices=False)
        u, v = w @ wt.T, vy
    u = np.ascontiguousarray(u)
    v = np.ascontiguousarray(v)
    _fix_signs(u, v)
    return SpectralEmbedding(u, s, v)


def row_normalize(u, floor: float = ZERO_ROW_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalize rows; rows with norm below ``floor`` stay zero.

    Returns the normalized matrix and a boolean mask of the zero rows.
    """
    u = np.asarray(u, dtype=float)
    norms = np.linalg.norm(u, axis=1)
    zero = norms < floor
    out = np.zeros_like(u)
    out[~zero] = u[~zero] / norms[~zero, None]
    return out, zero


def ratio_embedding(u, floor: float = RATIO_FLOOR) -> np.ndarray:
    """Entrywise ratios of columns 2..K to column 1.

    Denominators smaller in magnitude than ``floor * max|u[:, 0]|`` are
    replaced by that threshold, keeping their sign (zero counts as positive).
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] < 2:
        raise ValueError("ratio embedding needs at least two columns")
    first = u[:, 0].copy()
    thresh = floor * np.max(np.abs(first))
    small = np.abs(first) < thresh
    if thresh == 0:
        thresh = floor
        small = np.ones_like(first, dtype=bool)
    first[small] = np.where(first[small] < 0, -thresh, thresh)
    return u[:, 1:] / first[:, None]


def spectral_norm(m) -> float:
    """Largest singular value, via the top eigenvalue of the smaller Gram matrix."""
    m = _as_float(m)
    if m.size == 0:
        return 0.0
    gram = m.T @ m if m.shape[0] >= m.shape[1] else m @ m.T
    top = scipy.linalg.eigh(gram, eigvals_only=True, subset_by_index=[gram.shape[0] - 1] * 2)[0]
    return float(np.sqrt(max(top, 0.0)))


# --------------------------------------------------------------------- k-means


@dataclass(frozen=True, eq=False)
class KMeansFit:
    labels: np.ndarray
    centers: np.ndarray
    wcss: float
    n_iter: int
    history: tuple[float, ...]
    restart: int


def _sq_dists(x: np.ndarray, x_sq: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = x_sq[:, None] - 2.0 * (x @ centers.T) + np.sum(centers**2, axis=1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    x_sq = np.sum(x**2, axis=1)
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(x, x_sq, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            # fewer distinct points than k: take any point not already chosen
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[rng.integers(free.size)])
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(x, x_sq, x[[idx]])[:, 0])
    return x[chosen].copy()


def lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 100) -> KMeansFit:
    """Lloyd iterations from given centers; WCSS is recorded after every update.

    A cluster left empty by an assignment step receives the point farthest
    from its current center.
    """
    x = np.asarray(x, dtype=float)
    centers = np.array(centers, dtype=float)
    k = centers.shape[0]
    x_sq = np.sum(x**2, axis=1)
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dists(x, x_sq, centers)
        new = np.argmin(d, axis=1)
        point_d = d[np.arange(x.shape[0]), new]
        for c in range(k):
            if not np.any(new == c):
                far = int(np.argmax(point_d))
                new[far] = c
                point_d[far] = 0.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        occupied = counts > 0
        centers[occupied] = sums[occupied] / counts[occupied, None]
        history.append(_wcss(x, labels, centers))
    return KMeansFit(labels, centers, history[-1], n_iter, tuple(history), 0)


def _wcss(x, labels, centers) -> float:
    return float(np.sum((x - centers[labels]) ** 2))


def kmeans_fit(points, k: int, max_iter: int = 100, restarts: int = 10, seed: int = 0) -> KMeansFit:
    """Best of ``restarts`` k-means++ / Lloyd runs, ordered by (WCSS, restart index)."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for rep in range(restarts):
        rng = stream(seed, rep)
        fit = lloyd(x, kmeans_plus_plus(x, k, rng), max_iter)
        if best is None or fit.wcss < best.wcss:
            best = KMeansFit(fit.labels, fit.centers, fit.wcss, fit.n_iter, fit.history, rep)
        if best.wcss == 0.0:
            break
    return best


def kmeans(points, k: int, max_iter: int = 100, restarts: int = 10, seed: int = 0) -> Labeling:
    return Labeling(kmeans_fit(points, k, max_iter, restarts, seed).labels, k)
