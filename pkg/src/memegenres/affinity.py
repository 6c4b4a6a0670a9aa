"""Affinity graph assembly: sampled queries -> OS2OS scores -> sparse matrix.

Only a fraction of images are queried; each contributes at most J weighted
edges, symmetrized by max so one-sided evidence survives. Nodes that end up
with no edges are excluded from the spectral stage and land in the overflow
cluster downstream.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import CorpusSnapshot
from .features import FeatureSet
from .index import DEFAULT_KNN, DEFAULT_NPROBE, OpqIvfIndex, search
from .matching import TOP_J, collect_candidates, score_images

logger = logging.getLogger(__name__)

QUERY_FRACTION = 0.1


@dataclass
class SparseAffinity:
    n: int
    edges: list[tuple[int, int, float]] = field(default_factory=list)  # i < j, weight > 0

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n)
        for i, j, w in self.edges:
            deg[i] += w
            deg[j] += w
        return deg

    def edge_counts(self) -> np.ndarray:
        cnt = np.zeros(self.n, dtype=np.int64)
        for i, j, _ in self.edges:
            cnt[i] += 1
            cnt[j] += 1
        return cnt


@dataclass
class QueryPlan:
    query_ids: list[int]
    fraction: float
    seed: int


def sample_queries(snapshot: CorpusSnapshot, fraction: float = QUERY_FRACTION, seed: int = 0) -> QueryPlan:
    """Uniform sample without replacement, sorted; |Q| = round(fraction*N), min 1."""
    n = len(snapshot)
    if n < 1:
        raise ValueError("empty snapshot")
    count = min(n, max(1, round(fraction * n)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    ids = [r.image_id for r in snapshot.records]
    picked = sorted(int(ids[i]) for i in rng.choice(n, size=count, replace=False))
    return QueryPlan(query_ids=picked, fraction=fraction, seed=seed)


def build_affinity(
    index: OpqIvfIndex,
    features: Mapping[int, FeatureSet],
    plan: QueryPlan,
    J: int = TOP_J,
    knn: int = DEFAULT_KNN,
    nprobe: int = DEFAULT_NPROBE,
    n_nodes: int | None = None,
) -> SparseAffinity:
    """Run the match path for every planned query and collect weighted edges."""
    n = n_nodes if n_nodes is not None else (max(features) + 1 if features else 0)
    best: dict[tuple[int, int], float] = {}
    for qid in plan.query_ids:
        fs = features.get(qid)
        if fs is None or len(fs) == 0:
            logger.warning("query %d skipped: no stored features", qid)
            continue
        raw = search(index, fs.descriptors, knn=knn, nprobe=nprobe, exclude_image=qid)
        cands = collect_candidates(fs, raw, features)
        for s in score_images(fs, cands, J=J):
            if s.score <= 0 or s.image_id == qid:
                continue
            key = (qid, s.image_id) if qid < s.image_id else (s.image_id, qid)
            w = float(s.score)
            if w > best.get(key, 0.0):
                best[key] = w
    edges = [(i, j, best[(i, j)]) for (i, j) in sorted(best)]
    return SparseAffinity(n=n, edges=edges)


def connected_components(a: SparseAffinity) -> list[int]:
    """Union-find component sizes, descending; isolated nodes count as size 1."""
    parent = list(range(a.n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, _ in a.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri
    sizes: dict[int, int] = {}
    for v in range(a.n):
        r = find(v)
        sizes[r] = sizes.get(r, 0) + 1
    return sorted(sizes.values(), reverse=True)


def save_affinity(a: SparseAffinity, path: str | Path, seed: int = 0, J: int = TOP_J) -> None:
    with open(path, "w") as fh:
        fh.write(f"{a.n}\t{len(a.edges)}\t{seed}\t{J}\n")
        for i, j, w in a.edges:
            fh.write(f"{i}\t{j}\t{w:.17g}\n")


def load_affinity(path: str | Path) -> SparseAffinity:
    with open(path) as fh:
        head = fh.readline().split()
        n, m = int(head[0]), int(head[1])
        edges = []
        for line in fh:
            i, j, w = line.split()
            edges.append((int(i), int(j), float(w)))
    if len(edges) != m:
        raise ValueError(f"affinity file truncated: header says {m} edges, found {len(edges)}")
    return SparseAffinity(n=n, edges=edges)
