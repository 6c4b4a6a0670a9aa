"""Spectral clustering of the affinity graph.

Builds the symmetric normalized Laplacian L = I - D^{-1/2} A D^{-1/2} over the
nodes that have at least one edge, takes the eigenvectors of the k smallest
eigenvalues with a sparse Lanczos solver, row-normalizes them (the standard
Ng-Jordan-Weiss step), and runs seeded restarted k-means on the rows.
Zero-edge nodes never enter the Laplacian; they are assigned to the reserved
overflow cluster id K.

Parameters and conventions
--------------------------
- embedding dimension k equals the sought cluster count K
- even-count medians are the mean of the two middle sizes
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from ._kmeans import assign as _assign
from ._kmeans import kmeans_pp_init, lloyd
from .affinity import SparseAffinity

logger = logging.getLogger(__name__)

KMEANS_RESTARTS = 8
KMEANS_TOL = 1e-7
KMEANS_MAX_ITER = 300
# eigsh needs k < n; near-full spectra fall back to a dense solve
_DENSE_MARGIN = 2


@dataclass
class SpectralEmbedding:
    n_active: int
    k: int
    coords: np.ndarray        # (n_active, k), rows L2-normalized
    eigenvalues: np.ndarray   # (k,) ascending, in [-1e-8, 2+1e-8]
    node_map: np.ndarray      # (n_active,) active row -> image id
    n_total: int = 0          # full node count including zero-edge nodes


@dataclass
class ClusterAssignment:
    assignments: dict[int, int]   # image id -> cluster id in [0, K]; K = overflow
    K: int
    centroid_inertia: float

    def sizes(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for c in self.assignments.values():
            out[c] = out.get(c, 0) + 1
        return out


@dataclass
class ClusterStats:
    sizes: dict[int, int]          # non-overflow cluster id -> size
    median_size: float
    max_size: int
    min_size: int
    histogram: dict[int, int]      # size -> number of clusters of that size
    overflow_size: int
    empty_clusters: list[int] = field(default_factory=list)


def _laplacian(a: SparseAffinity) -> tuple[sp.csr_matrix, np.ndarray]:
    """(L_sym over active nodes, node_map). Asserts no zero-degree active rows."""
    if not a.edges:
        raise ValueError("affinity graph has no edges; nothing to embed")
    deg = a.degrees()
    node_map = np.nonzero(deg > 0)[0]
    inv = -np.ones(a.n, dtype=np.int64)
    inv[node_map] = np.arange(len(node_map))
    rows, cols, vals = [], [], []
    for i, j, w in a.edges:
        if i == j:
            raise ValueError("self-loop in affinity graph")
        if w <= 0:
            raise ValueError("non-positive edge weight")
        rows += [inv[i], inv[j]]
        cols += [inv[j], inv[i]]
        vals += [w, w]
    n = len(node_map)
    w_mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    d = np.asarray(w_mat.sum(axis=1)).ravel()
    assert (d > 0).all(), "zero-degree row survived restriction to active nodes"
    dinv = 1.0 / np.sqrt(d)
    dm = sp.diags(dinv)
    lap = sp.identity(n, format="csr") - dm @ w_mat @ dm
    return lap.tocsr(), node_map


def spectral_embed(a: SparseAffinity, k: int) -> SpectralEmbedding:
    """Eigenvectors of the k smallest Laplacian eigenvalues, rows normalized."""
    if k < 1:
        raise ValueError("k must be positive")
    lap, node_map = _laplacian(a)
    n = lap.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} active (non-isolated) nodes")

    if k > n - _DENSE_MARGIN:
        vals, vecs = np.linalg.eigh(lap.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        # smallest eigenvalues of L via largest of 2I - L (shift keeps Lanczos
        # away from the notoriously slow which='SM' mode and needs no inverse)
        shifted = (sp.identity(n, format="csr") * 2.0) - lap
        v0 = np.random.default_rng(np.random.SeedSequence([0x5BEC])).standard_normal(n)
        mu, vecs = eigsh(shifted, k=k, which="LA", v0=v0, maxiter=max(2000, 40 * n))
        vals = 2.0 - mu
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]

    norms = np.linalg.norm(vecs, axis=1)
    degenerate = norms < 1e-12
    if degenerate.any():
        vecs = vecs.copy()
        vecs[degenerate, 0] = 1.0
        norms = np.linalg.norm(vecs, axis=1)
    coords = vecs / norms[:, None]
    return SpectralEmbedding(
        n_active=n,
        k=k,
        coords=coords,
        eigenvalues=np.asarray(vals, dtype=np.float64),
        node_map=node_map,
        n_total=a.n,
    )


def kmeans(
    embedding: SpectralEmbedding,
    K: int,
    restarts: int = KMEANS_RESTARTS,
    seed: int = 0,
) -> ClusterAssignment:
    """Restarted k-means++ on the embedding rows; overflow cluster appended."""
    if K < 1:
        raise ValueError("K must be positive")
    if K > embedding.n_active:
        raise ValueError(f"K={K} exceeds {embedding.n_active} embedded nodes")
    x = np.ascontiguousarray(embedding.coords, dtype=np.float64)
    root = np.random.SeedSequence([seed, 0x3EA])
    best_labels, best_inertia = None, np.inf
    for child in root.spawn(restarts):
        rng = np.random.default_rng(child)
        init = kmeans_pp_init(x, K, rng)
        _, labels, inertia = lloyd(x, init, iterations=KMEANS_MAX_ITER, tol=KMEANS_TOL)
        if inertia < best_inertia - 1e-12:
            best_labels, best_inertia = labels, inertia
    assert best_labels is not None
    assignments = {int(img): int(c) for img, c in zip(embedding.node_map, best_labels)}
    n_total = embedding.n_total if embedding.n_total else embedding.n_active
    for img in range(n_total):
        if img not in assignments:
            assignments[img] = K
    return ClusterAssignment(assignments=assignments, K=K, centroid_inertia=float(best_inertia))


def cluster_graph(a: SparseAffinity, K: int, seed: int = 0) -> ClusterAssignment:
    """Spectral embedding + k-means, tolerant of graphs too sparse for K.

    A graph only supports as many spectral clusters as it has connected
    (non-isolated) nodes. Near-duplicate graphs over corpora with few actual
    duplicates are routinely that sparse, so instead of refusing, the
    embedding is clamped to the achievable count: cluster ids above the clamp
    stay empty, the declared K is kept, and every node that could not be
    embedded lands in the overflow cluster K.
    """
    active = int((a.degrees() > 0).sum())
    k_eff = min(K, active)
    if k_eff < 1:
        logger.warning("affinity graph has no edges; every node goes to overflow")
        return ClusterAssignment(
            assignments={img: K for img in range(a.n)}, K=K, centroid_inertia=0.0
        )
    if k_eff < K:
        logger.warning(
            "graph supports %d of the requested %d clusters; the rest stay empty",
            k_eff,
            K,
        )
    emb = spectral_embed(a, k_eff)
    asg = kmeans(emb, k_eff, seed=seed)
    if k_eff == K:
        return asg
    assignments = {img: (K if c == k_eff else c) for img, c in asg.assignments.items()}
    return ClusterAssignment(
        assignments=assignments, K=K, centroid_inertia=asg.centroid_inertia
    )


def cluster_stats(assignment: ClusterAssignment) -> ClusterStats:
    """Size statistics over the non-overflow clusters; overflow reported separately."""
    counts = assignment.sizes()
    overflow = counts.pop(assignment.K, 0)
    empty = [c for c in range(assignment.K) if counts.get(c, 0) == 0]
    sizes = sorted(counts.values())
    if not sizes:
        raise ValueError("no non-overflow clusters present")
    m = len(sizes)
    median = float(sizes[m // 2]) if m % 2 else (sizes[m // 2 - 1] + sizes[m // 2]) / 2.0
    hist: dict[int, int] = {}
    for s in sizes:
        hist[s] = hist.get(s, 0) + 1
    return ClusterStats(
        sizes=dict(sorted(counts.items())),
        median_size=median,
        max_size=sizes[-1],
        min_size=sizes[0],
        histogram=hist,
        overflow_size=overflow,
        empty_clusters=empty,
    )


def save_assignment(assignment: ClusterAssignment, path) -> None:
    with open(path, "w") as fh:
        fh.write("image_id,cluster_id\n")
        for img in sorted(assignment.assignments):
            fh.write(f"{img},{assignment.assignments[img]}\n")


def load_assignment(path, K: int | None = None) -> ClusterAssignment:
    assignments: dict[int, int] = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "image_id,cluster_id":
            raise ValueError(f"not an assignment file: {path}")
        for line in fh:
            img, c = line.strip().split(",")
            assignments[int(img)] = int(c)
    if K is None:
        K = max(assignments.values()) if assignments else 0
    return ClusterAssignment(assignments=assignments, K=K, centroid_inertia=float("nan"))
