import numpy as np
import pytest

from memegenres.affinity import SparseAffinity
from memegenres.spectral import (
    ClusterAssignment,
    cluster_graph,
    cluster_stats,
    kmeans,
    load_assignment,
    save_assignment,
    spectral_embed,
)


def _random_graph(rng, n, p=0.15):
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.append((i, j, float(rng.uniform(0.5, 10.0))))
    if not edges:
        edges.append((0, 1, 1.0))
    return SparseAffinity(n=n, edges=edges)


def _dense_laplacian_eigenvalues(a: SparseAffinity):
    """Oracle: dense normalized Laplacian over nodes with degree > 0."""
    w = np.zeros((a.n, a.n))
    for i, j, v in a.edges:
        w[i, j] += v
        w[j, i] += v
    deg = w.sum(axis=1)
    active = np.nonzero(deg > 0)[0]
    w = w[np.ix_(active, active)]
    d = w.sum(axis=1)
    dinv = np.diag(1.0 / np.sqrt(d))
    lap = np.eye(len(active)) - dinv @ w @ dinv
    return np.linalg.eigvalsh(lap), active


def test_eigenvalues_match_dense_oracle_on_random_graphs():
    for t in range(20):
        rng = np.random.default_rng(100 + t)
        a = _random_graph(rng, int(rng.integers(8, 51)))
        oracle, active = _dense_laplacian_eigenvalues(a)
        k = min(int(rng.integers(2, 6)), len(active))
        emb = spectral_embed(a, k=k)
        assert emb.n_active == len(active)
        np.testing.assert_array_equal(emb.node_map, active)
        np.testing.assert_allclose(emb.eigenvalues, oracle[:k], atol=1e-6)


def test_embedding_rows_are_unit_norm_and_spectrum_bounded():
    rng = np.random.default_rng(42)
    a = _random_graph(rng, 30, p=0.2)
    emb = spectral_embed(a, k=3)
    np.testing.assert_allclose(np.linalg.norm(emb.coords, axis=1), 1.0, atol=1e-9)
    assert emb.eigenvalues.min() >= -1e-8
    assert emb.eigenvalues.max() <= 2.0 + 1e-8
    assert (np.diff(emb.eigenvalues) >= -1e-12).all()


def test_dense_fallback_used_near_full_spectrum():
    # k within the dense margin of n_active exercises the eigh branch
    a = SparseAffinity(n=5, edges=[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)])
    oracle, _ = _dense_laplacian_eigenvalues(a)
    emb = spectral_embed(a, k=4)
    np.testing.assert_allclose(emb.eigenvalues, oracle[:4], atol=1e-9)


def _two_cliques(bridge=None):
    edges = []
    for grp in (range(0, 5), range(5, 10)):
        grp = list(grp)
        for i in range(len(grp)):
            for j in range(i + 1, len(grp)):
                edges.append((grp[i], grp[j], 1.0))
    if bridge:
        edges.append(bridge)
    return SparseAffinity(n=10, edges=edges)


def test_two_clique_graph_clusters_exactly():
    for a in (_two_cliques(), _two_cliques(bridge=(0, 5, 0.01))):
        emb = spectral_embed(a, k=2)
        asg = kmeans(emb, K=2, seed=0)
        left = {asg.assignments[i] for i in range(5)}
        right = {asg.assignments[i] for i in range(5, 10)}
        assert len(left) == 1 and len(right) == 1
        assert left != right


def test_disconnected_components_give_zero_eigenvalues():
    a = _two_cliques()
    emb = spectral_embed(a, k=2)
    np.testing.assert_allclose(emb.eigenvalues, [0.0, 0.0], atol=1e-10)


def test_zero_edge_nodes_assigned_to_overflow():
    a = SparseAffinity(n=12, edges=_two_cliques().edges)  # nodes 10, 11 isolated
    emb = spectral_embed(a, k=2)
    asg = kmeans(emb, K=2, seed=0)
    assert asg.assignments[10] == 2 and asg.assignments[11] == 2
    assert set(asg.assignments) == set(range(12))
    assert all(0 <= c <= 2 for c in asg.assignments.values())


def test_clustering_is_deterministic():
    rng = np.random.default_rng(7)
    a = _random_graph(rng, 40, p=0.2)
    emb1 = spectral_embed(a, k=4)
    emb2 = spectral_embed(a, k=4)
    np.testing.assert_array_equal(emb1.coords, emb2.coords)
    asg1 = kmeans(emb1, K=4, seed=3)
    asg2 = kmeans(emb2, K=4, seed=3)
    assert asg1.assignments == asg2.assignments


def test_embed_and_kmeans_validate_arguments():
    a = _two_cliques()
    with pytest.raises(ValueError, match="k must be positive"):
        spectral_embed(a, k=0)
    with pytest.raises(ValueError, match="exceeds"):
        spectral_embed(a, k=11)
    with pytest.raises(ValueError, match="no edges"):
        spectral_embed(SparseAffinity(n=4, edges=[]), k=1)
    with pytest.raises(ValueError, match="self-loop"):
        spectral_embed(SparseAffinity(n=4, edges=[(1, 1, 1.0)]), k=1)
    with pytest.raises(ValueError, match="non-positive"):
        spectral_embed(SparseAffinity(n=4, edges=[(0, 1, -2.0)]), k=1)
    emb = spectral_embed(a, k=2)
    with pytest.raises(ValueError, match="K must be positive"):
        kmeans(emb, K=0)
    with pytest.raises(ValueError, match="exceeds"):
        kmeans(emb, K=11)


def test_cluster_stats_medians_and_overflow():
    asg = ClusterAssignment(
        assignments={0: 0, 1: 0, 2: 1, 3: 2, 4: 2, 5: 2, 6: 4, 7: 4, 8: 4, 9: 4},
        K=4,
        centroid_inertia=0.0,
    )
    st = cluster_stats(asg)
    assert st.sizes == {0: 2, 1: 1, 2: 3}
    assert st.overflow_size == 4
    assert st.median_size == 2.0
    assert st.max_size == 3 and st.min_size == 1
    assert st.histogram == {1: 1, 2: 1, 3: 1}
    assert st.empty_clusters == [3]


def test_cluster_stats_even_count_median_is_middle_mean():
    asg = ClusterAssignment(
        assignments={0: 0, 1: 1, 2: 2, 3: 2, 4: 3, 5: 3, 6: 3},
        K=4,
        centroid_inertia=0.0,
    )
    st = cluster_stats(asg)  # sizes [1, 1, 2, 3] -> (1 + 2) / 2
    assert st.median_size == 1.5


def test_assignment_file_round_trip(tmp_path):
    asg = ClusterAssignment(assignments={0: 1, 1: 0, 2: 2, 3: 2}, K=2, centroid_inertia=1.0)
    path = tmp_path / "clusters.csv"
    save_assignment(asg, path)
    back = load_assignment(path, K=2)
    assert back.assignments == asg.assignments
    assert back.K == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("something,else\n")
    with pytest.raises(ValueError, match="not an assignment file"):
        load_assignment(bad)


def test_cluster_graph_matches_manual_composition_when_graph_is_dense_enough():
    rng = np.random.default_rng(5)
    a = _random_graph(rng, 30, p=0.3)
    manual = kmeans(spectral_embed(a, 4), 4, seed=0)
    guarded = cluster_graph(a, 4, seed=0)
    assert guarded.assignments == manual.assignments
    assert guarded.K == 4


def test_cluster_graph_clamps_when_graph_cannot_support_k():
    # two connected pairs in a 10-node world: only 4 active nodes, so at most
    # 4 clusters exist no matter how many were requested
    a = SparseAffinity(n=10, edges=[(0, 1, 3.0), (2, 3, 5.0)])
    asg = cluster_graph(a, 7, seed=0)
    assert asg.K == 7
    used = {c for c in asg.assignments.values() if c != 7}
    assert used <= set(range(4))
    # the isolated six nodes all land in the declared overflow id, not in 4
    for img in range(4, 10):
        assert asg.assignments[img] == 7
    # every connected node got a real cluster, none leaked into overflow
    for img in range(4):
        assert asg.assignments[img] != 7


def test_cluster_graph_on_edgeless_graph_sends_everything_to_overflow():
    a = SparseAffinity(n=5, edges=[])
    asg = cluster_graph(a, 3, seed=0)
    assert asg.assignments == {i: 3 for i in range(5)}
    assert asg.K == 3
