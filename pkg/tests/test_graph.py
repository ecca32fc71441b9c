import numpy as np
import pytest
from scipy import sparse

from cglearn import (
    Graph,
    NormalizedAdjacency,
    assign_splits,
    build_task_stream,
    disjoint_union,
    induced_subgraph,
    largest_remainder,
    normalize_adjacency,
    sbm_generate,
)
from conftest import make_graph

TRAIN, VAL, TEST = 0, 1, 2


def test_largest_remainder_hand_cases():
    assert largest_remainder([3, 1], 5).tolist() == [4, 1]
    assert largest_remainder([5, 3, 2], 7).tolist() == [4, 2, 1]
    # remainder tie goes to the lower index
    assert largest_remainder([1, 1], 3).tolist() == [2, 1]
    assert largest_remainder([3, 1], 0).tolist() == [0, 0]


def test_largest_remainder_floor():
    assert largest_remainder([99, 1], 10, floor=1).tolist() == [9, 1]
    assert largest_remainder([10, 10, 1], 3, floor=1).tolist() == [1, 1, 1]
    with pytest.raises(ValueError):
        largest_remainder([1, 1, 1], 2, floor=1)


def test_largest_remainder_properties():
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = int(rng.integers(1, 6))
        w = rng.integers(1, 100, size=k)
        total = int(rng.integers(k, 40))
        out = largest_remainder(w, total, floor=1)
        assert out.sum() == total
        assert (out >= 1).all()
        # without a floor, apportionment error stays below one unit
        free = largest_remainder(w, total)
        assert free.sum() == total
        exact = total * w / w.sum()
        assert np.abs(free - exact).max() < 1.0 + 1e-9


def test_normalize_single_node():
    g = make_graph([], [0], feature_dim=1)
    a = normalize_adjacency(g)
    assert a.matrix.toarray().tolist() == [[1.0]]


def test_normalize_edge_pair():
    g = make_graph([(0, 1)], [0, 1])
    dense = normalize_adjacency(g).matrix.toarray()
    np.testing.assert_allclose(dense, np.full((2, 2), 0.5), atol=1e-15)


def test_normalize_path_graph():
    # degrees with self-loops are (2, 3, 2)
    g = make_graph([(0, 1), (1, 2)], [0, 0, 0])
    dense = normalize_adjacency(g).matrix.toarray()
    assert dense[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert dense[1, 1] == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert dense[0, 1] == pytest.approx(1.0 / np.sqrt(6.0), abs=1e-15)
    assert dense[0, 2] == 0.0


def test_normalize_exact_symmetry_and_range():
    g = sbm_generate(3, 30, 0.3, 0.05, 4, 1.0, seed=1)
    m = normalize_adjacency(g).matrix
    assert (m != m.T).nnz == 0
    assert m.data.min() > 0.0
    assert m.data.max() <= 1.0


def test_normalize_cycle_rows_sum_to_one():
    n = 6
    g = make_graph([(i, (i + 1) % n) for i in range(n)], [0] * n)
    sums = np.asarray(normalize_adjacency(g).matrix.sum(axis=1)).ravel()
    np.testing.assert_allclose(sums, np.ones(n), atol=1e-12)


def test_identity_adjacency_matmul():
    x = np.arange(6, dtype=np.float64).reshape(3, 2)
    ident = NormalizedAdjacency.identity(3)
    np.testing.assert_array_equal(ident @ x, x)


def test_graph_validation_errors():
    adj = sparse.csr_array((np.ones(2), (np.array([0, 1]), np.array([1, 0]))), shape=(2, 2))
    feats = np.ones((2, 2))
    marks = np.zeros(2, dtype=np.int8)
    with pytest.raises(ValueError, match="symmetric"):
        Graph(sparse.csr_array((np.ones(1), (np.array([0]), np.array([1]))), shape=(2, 2)), feats, np.array([0, 1]), marks)
    with pytest.raises(ValueError, match="zero diagonal"):
        Graph(sparse.csr_array((np.ones(2), (np.array([0, 1]), np.array([0, 1]))), shape=(2, 2)), feats, np.array([0, 1]), marks)
    with pytest.raises(ValueError, match="must all be 1"):
        Graph(sparse.csr_array((np.full(2, 2.0), (np.array([0, 1]), np.array([1, 0]))), shape=(2, 2)), feats, np.array([0, 1]), marks)
    with pytest.raises(ValueError, match="nonnegative"):
        Graph(adj, feats, np.array([0, -1]), marks)
    with pytest.raises(ValueError, match="split marks"):
        Graph(adj, feats, np.array([0, 1]), np.array([0, 3], dtype=np.int8))


def test_graph_properties():
    g = make_graph([(0, 1), (1, 2)], [0, 1, 1], split=[TRAIN, VAL, TEST])
    assert g.num_nodes == 3
    assert g.num_features == 2
    assert g.num_edges == 2
    assert g.num_classes == 2
    assert g.train_mask.tolist() == [True, False, False]
    assert g.val_mask.tolist() == [False, True, False]
    assert g.test_mask.tolist() == [False, False, True]


def test_induced_subgraph_triangle():
    g = make_graph([(0, 1), (1, 2), (0, 2)], [0, 1, 2])
    sub, ids = induced_subgraph(g, [0, 2])
    assert ids.tolist() == [0, 2]
    assert sub.num_nodes == 2
    assert sub.num_edges == 1
    assert sub.labels.tolist() == [0, 2]
    np.testing.assert_array_equal(sub.features, g.features[[0, 2]])


def test_induced_subgraph_identity_and_single():
    g = make_graph([(0, 1), (1, 2)], [0, 1, 2])
    full, ids = induced_subgraph(g, [0, 1, 2])
    assert ids.tolist() == [0, 1, 2]
    assert (full.adjacency != g.adjacency).nnz == 0
    solo, _ = induced_subgraph(g, [1])
    assert solo.num_nodes == 1
    assert solo.num_edges == 0


def test_induced_subgraph_errors():
    g = make_graph([(0, 1)], [0, 1])
    with pytest.raises(ValueError):
        induced_subgraph(g, [])
    with pytest.raises(ValueError):
        induced_subgraph(g, [5])


def test_disjoint_union():
    a = make_graph([(0, 1)], [0, 0], split=[TRAIN, VAL])
    b = make_graph([(0, 1), (1, 2)], [1, 1, 1], split=[TEST, TRAIN, TRAIN])
    u = disjoint_union([a, b])
    assert u.num_nodes == 5
    assert u.num_edges == 3
    assert u.labels.tolist() == [0, 0, 1, 1, 1]
    assert u.split.tolist() == [TRAIN, VAL, TEST, TRAIN, TRAIN]
    dense = u.adjacency.toarray()
    assert dense[:2, 2:].sum() == 0  # no cross-entry edges
    np.testing.assert_array_equal(u.features[:2], a.features)


def test_assign_splits_counts():
    # one class of exactly 10 nodes splits 6/2/2
    g = make_graph([], [0] * 10, feature_dim=1)
    out = assign_splits(g, (0.6, 0.2, 0.2), seed=0)
    counts = np.bincount(out.split, minlength=3)
    assert counts.tolist() == [6, 2, 2]


def test_assign_splits_deterministic_and_error():
    g = make_graph([], [0] * 10 + [1] * 7, feature_dim=1)
    a = assign_splits(g, (0.6, 0.2, 0.2), seed=3)
    b = assign_splits(g, (0.6, 0.2, 0.2), seed=3)
    np.testing.assert_array_equal(a.split, b.split)
    c = assign_splits(g, (0.6, 0.2, 0.2), seed=4)
    assert not np.array_equal(a.split, c.split)
    small = make_graph([], [0, 0, 1, 1], feature_dim=1)
    with pytest.raises(ValueError, match="class 0"):
        assign_splits(small, (0.6, 0.2, 0.2), seed=0)


def test_build_task_stream_partition():
    g = sbm_generate(10, 12, 0.5, 0.02, 12, 2.0, seed=5)
    stream = build_task_stream(g, classes_per_task=2, seed=5)
    assert len(stream) == 5
    assert [t.class_set for t in stream] == [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
    assert [t.index for t in stream] == [1, 2, 3, 4, 5]
    assert stream.num_classes == 10
    assert stream.feature_dim == 12
    # every node lands in exactly one task
    seen = np.concatenate([t.node_ids for t in stream])
    assert np.array_equal(np.sort(seen), np.arange(g.num_nodes))
    for t in stream:
        assert set(np.unique(t.incoming.labels)) == set(t.class_set)


def test_build_task_stream_remainder_and_determinism():
    g = sbm_generate(3, 10, 0.6, 0.0, 4, 2.0, seed=2)
    stream = build_task_stream(g, classes_per_task=2, seed=2)
    assert [t.class_set for t in stream] == [(0, 1), (2,)]
    again = build_task_stream(g, classes_per_task=2, seed=2)
    for t, u in zip(stream, again):
        np.testing.assert_array_equal(t.incoming.split, u.incoming.split)
        np.testing.assert_array_equal(t.incoming.features, u.incoming.features)


def test_build_task_stream_keeps_existing_splits():
    g = sbm_generate(2, 10, 0.6, 0.0, 4, 2.0, seed=2)
    g = assign_splits(g, (0.6, 0.2, 0.2), seed=9)
    stream = build_task_stream(g, classes_per_task=2, split_fractions=None, seed=0)
    task = stream[0]
    np.testing.assert_array_equal(task.incoming.split, g.split[task.node_ids])


def test_build_task_stream_contiguity_error():
    g = make_graph([], [0, 0, 0, 5, 5, 5], feature_dim=1)
    with pytest.raises(ValueError, match="contiguous"):
        build_task_stream(g, classes_per_task=1)


def test_sbm_deterministic_regimes():
    tri = sbm_generate(2, 3, 1.0, 0.0, 4, 1.0, seed=0)
    assert tri.num_edges == 6  # two 3-cliques
    assert tri.labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert tri.adjacency.toarray()[:3, 3:].sum() == 0
    empty = sbm_generate(2, 3, 0.0, 0.0, 4, 1.0, seed=0)
    assert empty.num_edges == 0
    assert empty.split.tolist() == [TRAIN] * 6


def test_sbm_edge_count_near_binomial_mean():
    g = sbm_generate(4, 50, 0.3, 0.02, 8, 1.0, seed=0)
    coo = g.adjacency.tocoo()
    intra = sum(1 for u, v in zip(coo.row, coo.col) if u < v and g.labels[u] == g.labels[v])
    pairs = 4 * (50 * 49 // 2)
    mean = pairs * 0.3
    sigma = np.sqrt(pairs * 0.3 * 0.7)
    assert abs(intra - mean) < 3 * sigma


def test_sbm_feature_separation():
    sep = 3.0
    g = sbm_generate(3, 200, 0.0, 0.0, 5, sep, seed=1)
    for c in range(3):
        mean = g.features[g.labels == c].mean(axis=0)
        target = np.zeros(5)
        target[c] = sep
        assert np.abs(mean - target).max() < 0.3


def test_sbm_validation():
    with pytest.raises(ValueError):
        sbm_generate(5, 10, 0.5, 0.0, 4, 1.0, seed=0)  # blocks > feature_dim
    with pytest.raises(ValueError):
        sbm_generate(2, 10, 0.1, 0.5, 4, 1.0, seed=0)  # p_out > p_in
    a = sbm_generate(2, 20, 0.4, 0.1, 4, 1.0, seed=7)
    b = sbm_generate(2, 20, 0.4, 0.1, 4, 1.0, seed=7)
    assert (a.adjacency != b.adjacency).nnz == 0
    np.testing.assert_array_equal(a.features, b.features)
