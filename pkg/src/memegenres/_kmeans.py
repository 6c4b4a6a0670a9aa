"""Seeded k-means (k-means++ init, Lloyd iterations).

Shared by the coarse/product quantizers and the spectral clustering stage.
Everything here is deterministic given the Generator passed in.
"""
from __future__ import annotations

import numpy as np

# chunk row count for distance computations; keeps the (chunk x k) matrix small
_CHUNK = 16384


def squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared L2 distances, (n, k), computed via the expansion trick."""
    x2 = (x * x).sum(axis=1)[:, None]
    c2 = (centroids * centroids).sum(axis=1)[None, :]
    d = x2 + c2 - 2.0 * (x @ centroids.T)
    np.maximum(d, 0.0, out=d)
    return d


def assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per row. Returns (labels, squared distance to winner)."""
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int32)
    dists = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        d = squared_distances(x[lo:hi], centroids)
        labels[lo:hi] = np.argmin(d, axis=1)
        dists[lo:hi] = d[np.arange(hi - lo), labels[lo:hi]]
    return labels, dists


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding.

    When the D^2 mass hits zero (fewer distinct points than k) the remaining
    centroids are drawn uniformly, so duplicated centroids are possible but the
    call never fails.
    """
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = x[first]
    d2 = squared_distances(x, centroids[0:1])[:, 0]
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0 or not np.isfinite(total):
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[i] = x[idx]
        np.minimum(d2, squared_distances(x, centroids[i : i + 1])[:, 0], out=d2)
    return centroids


def lloyd(
    x: np.ndarray,
    centroids: np.ndarray,
    iterations: int = 25,
    tol: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd iterations from the given centroids.

    Empty clusters keep their previous centroid (no re-seeding), which keeps the
    objective monotone non-increasing. Returns (centroids, labels, inertia).
    """
    k = centroids.shape[0]
    centroids = centroids.astype(np.float64, copy=True)
    labels, d = assign(x, centroids)
    for _ in range(iterations):
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        nonempty = counts > 0
        new = centroids.copy()
        new[nonempty] = sums[nonempty] / counts[nonempty, None]
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        labels, d = assign(x, centroids)
        if shift < tol:
            break
    return centroids, labels, float(d.sum())


def kmeans_fit(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    iterations: int = 25,
    tol: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, float]:
    """k-means++ init followed by Lloyd. Single run."""
    if x.shape[0] < 1:
        raise ValueError("cannot run k-means on an empty sample")
    centroids = kmeans_pp_init(np.ascontiguousarray(x, dtype=np.float64), k, rng)
    return lloyd(x.astype(np.float64, copy=False), centroids, iterations, tol)
