import numpy as np
import pytest

from memegenres.affinity import (
    QueryPlan,
    SparseAffinity,
    build_affinity,
    connected_components,
    load_affinity,
    sample_queries,
    save_affinity,
)
from memegenres.corpus import CorpusSnapshot, ImageRecord
from memegenres.features import FeatureSet, Keypoint
from memegenres.index import build_index, train_opq


def _snapshot(n):
    recs = [
        ImageRecord(i, f"/x/{i}.png", f"{i:064x}", "t", 10, 10) for i in range(n)
    ]
    return CorpusSnapshot(records=recs, created_at=0.0, manifest_digest="0" * 64)


# -------------------------------------------------------------- sampling


def test_sample_queries_count_and_order():
    plan = sample_queries(_snapshot(200), fraction=0.1, seed=4)
    assert len(plan.query_ids) == 20
    assert plan.query_ids == sorted(plan.query_ids)
    assert len(set(plan.query_ids)) == 20
    assert all(0 <= q < 200 for q in plan.query_ids)


def test_sample_queries_minimum_one_and_full():
    assert len(sample_queries(_snapshot(3), fraction=0.01).query_ids) == 1
    assert sample_queries(_snapshot(5), fraction=1.0).query_ids == [0, 1, 2, 3, 4]
    # fraction > 1 clamps at N rather than oversampling
    assert len(sample_queries(_snapshot(5), fraction=3.0).query_ids) == 5


def test_sample_queries_deterministic_and_seed_sensitive():
    a = sample_queries(_snapshot(300), seed=9)
    b = sample_queries(_snapshot(300), seed=9)
    c = sample_queries(_snapshot(300), seed=10)
    assert a.query_ids == b.query_ids
    assert a.query_ids != c.query_ids


def test_sample_queries_empty_snapshot_raises():
    with pytest.raises(ValueError):
        sample_queries(_snapshot(0))


# ------------------------------------------------------------ the matrix


def test_degrees_and_edge_counts():
    a = SparseAffinity(n=4, edges=[(0, 1, 2.0), (1, 2, 3.0)])
    assert a.degrees().tolist() == [2.0, 5.0, 3.0, 0.0]
    assert a.edge_counts().tolist() == [1, 2, 1, 0]


def test_connected_components_sizes():
    a = SparseAffinity(n=7, edges=[(0, 1, 1), (1, 2, 1), (3, 4, 1)])
    assert connected_components(a) == [3, 2, 1, 1]
    assert connected_components(SparseAffinity(n=3, edges=[])) == [1, 1, 1]


def test_affinity_file_round_trip(tmp_path):
    a = SparseAffinity(n=5, edges=[(0, 3, 1.25), (2, 4, 7.0)])
    p = tmp_path / "a.tsv"
    save_affinity(a, p, seed=3, J=50)
    back = load_affinity(p)
    assert back.n == 5 and back.edges == a.edges
    head = p.read_text().splitlines()[0].split("\t")
    assert head == ["5", "2", "3", "50"]


def test_load_affinity_truncated_raises(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("4\t2\t0\t100\n0\t1\t1.0\n")  # header promises 2 edges
    with pytest.raises(ValueError, match="truncated"):
        load_affinity(p)


# ------------------------------------------------------- end-to-end build


@pytest.fixture(scope="module")
def planted_world():
    """Three fake images: 0 and 1 share a scaled object, 2 is unrelated noise."""
    rng = np.random.default_rng(21)
    n_kp = 100
    xy = rng.uniform(20, 200, size=(n_kp, 2))
    shared = rng.normal(size=(n_kp, 64))
    shared /= np.linalg.norm(shared, axis=1, keepdims=True)

    def kps(points, scale=4.0):
        return [Keypoint(float(x), float(y), scale, 0.0, 1.0) for x, y in points]

    f0 = FeatureSet(0, kps(xy), shared.astype(np.float32))
    f1 = FeatureSet(1, kps(xy * 1.5 + 7.0), shared.astype(np.float32))
    noise = rng.normal(size=(n_kp, 64))
    noise /= np.linalg.norm(noise, axis=1, keepdims=True)
    f2 = FeatureSet(2, kps(rng.uniform(0, 220, size=(n_kp, 2))), noise.astype(np.float32))

    features = {0: f0, 1: f1, 2: f2}
    all_desc = np.vstack([shared, shared, noise]).astype(np.float64)
    opq = train_opq(all_desc, iterations=3, seed=0)
    index = build_index(features, opq, coarse_k=8, seed=0)
    return index, features


def test_build_affinity_finds_planted_pair(planted_world):
    index, features = planted_world
    plan = QueryPlan(query_ids=[0], fraction=0.33, seed=0)
    a = build_affinity(index, features, plan, J=10, knn=3, nprobe=8)
    assert a.n == 3
    pairs = {(i, j) for i, j, _ in a.edges}
    assert (0, 1) in pairs
    weights = {(i, j): w for i, j, w in a.edges}
    assert weights[(0, 1)] >= 4.0  # at least min_inliers agreeing votes
    assert (0, 2) not in pairs  # noise image never verifies


def test_build_affinity_edges_are_canonical(planted_world):
    index, features = planted_world
    plan = QueryPlan(query_ids=[0, 1], fraction=0.66, seed=0)
    a = build_affinity(index, features, plan, J=10, knn=3, nprobe=8)
    for i, j, w in a.edges:
        assert i < j and w > 0
    assert a.edges == sorted(a.edges)
    # querying from both endpoints still yields one edge (max-symmetrized)
    assert sum(1 for i, j, _ in a.edges if (i, j) == (0, 1)) == 1


def test_build_affinity_skips_queries_without_features(planted_world, caplog):
    index, features = planted_world
    plan = QueryPlan(query_ids=[77], fraction=0.1, seed=0)
    import logging

    with caplog.at_level(logging.WARNING, logger="memegenres.affinity"):
        a = build_affinity(index, features, plan, J=10, n_nodes=3)
    assert a.edges == []
    assert any("77" in r.message for r in caplog.records)
