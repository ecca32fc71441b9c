"""Graph containers, adjacency normalization, task streams, and synthetic graphs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse

from .seeding import derive_rng

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = {TRAIN: "train", VAL: "val", TEST: "test"}
SPLIT_MARKS = {name: mark for mark, name in SPLIT_NAMES.items()}

_SPLIT_SALT = 0x73706c74


def largest_remainder(weights, total: int, floor: int = 0) -> np.ndarray:
    """Apportion `total` integer units proportionally to `weights`.

    Quotas are floored and leftover units go to the largest fractional
    remainders, ties broken toward the lower index. Every entry with positive
    weight receives at least `floor` units; the deficit is taken from the
    currently largest counts (again lowest index first on ties).
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty 1-d sequence")
    if np.any(w < 0.0) or not w.sum() > 0.0:
        raise ValueError("weights must be nonnegative with a positive sum")
    total = int(total)
    eligible = w > 0.0
    if total < floor * int(eligible.sum()):
        raise ValueError(
            f"cannot place {total} units over {int(eligible.sum())} entries "
            f"with a floor of {floor}"
        )
    quota = w / w.sum() * total
    counts = np.floor(quota).astype(np.int64)
    remainder = quota - counts
    order = np.argsort(-remainder, kind="stable")
    leftover = total - int(counts.sum())
    i = 0
    while leftover > 0:
        counts[order[i % order.size]] += 1
        i += 1
        leftover -= 1
    if floor > 0:
        for idx in np.flatnonzero(eligible & (counts < floor)):
            while counts[idx] < floor:
                donors = np.flatnonzero(counts > floor)
                donor = donors[np.argmax(counts[donors])]
                counts[donor] -= 1
                counts[idx] += 1
    return counts


@dataclass(frozen=True)
class Graph:
    """Undirected node-labelled graph with a train/val/test partition.

    adjacency: symmetric binary CSR matrix, zero diagonal.
    features:  float64 array of shape (num_nodes, num_features).
    labels:    int64 class ids, nonnegative.
    split:     int8 marks, one of TRAIN/VAL/TEST per node.
    """

    adjacency: sparse.csr_array
    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray

    def __post_init__(self):
        if not sparse.issparse(self.adjacency):
            raise ValueError("adjacency must be a scipy sparse matrix")
        adj = sparse.csr_array(self.adjacency, dtype=np.float64)
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        split = np.asarray(self.split, dtype=np.int8)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError(f"features must be 2-d and nonempty, got shape {features.shape}")
        n = features.shape[0]
        if adj.shape != (n, n):
            raise ValueError(f"adjacency shape {adj.shape} does not match {n} nodes")
        if labels.shape != (n,):
            raise ValueError(f"labels shape {labels.shape} does not match {n} nodes")
        if split.shape != (n,):
            raise ValueError(f"split shape {split.shape} does not match {n} nodes")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        if not np.isin(split, (TRAIN, VAL, TEST)).all():
            raise ValueError("split marks must be one of 0 (train), 1 (val), 2 (test)")
        if adj.nnz:
            if not np.all(adj.data == 1.0):
                raise ValueError("adjacency entries must all be 1")
            if np.count_nonzero(adj.diagonal()):
                raise ValueError("adjacency must have a zero diagonal (no self-loops)")
            if (adj != adj.T).nnz != 0:
                raise ValueError("adjacency must be symmetric")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "split", split)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def train_mask(self) -> np.ndarray:
        return self.split == TRAIN

    @property
    def val_mask(self) -> np.ndarray:
        return self.split == VAL

    @property
    def test_mask(self) -> np.ndarray:
        return self.split == TEST


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically degree-normalized adjacency with self-loops added.

    Stores D^{-1/2} (A + I) D^{-1/2} where D counts degrees of A + I.
    """

    matrix: sparse.csr_array

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, n: int) -> "NormalizedAdjacency":
        """Normalized adjacency of the edgeless graph (self-loops only)."""
        if n < 1:
            raise ValueError("need at least one node")
        return cls(matrix=sparse.eye_array(n, format="csr", dtype=np.float64))

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        return self.matrix @ other


def normalize_adjacency(g: Graph) -> NormalizedAdjacency:
    """Build D^{-1/2} (A + I) D^{-1/2} for a graph.

    Each entry is written as the single product s_i * a_ij * s_j so the result
    is exactly symmetric in floating point, not just up to rounding.
    """
    n = g.num_nodes
    loops = sparse.eye_array(n, format="csr", dtype=np.float64)
    a_hat = sparse.csr_array(g.adjacency + loops)
    deg = np.asarray(a_hat.sum(axis=1)).ravel()
    s = 1.0 / np.sqrt(deg)
    coo = a_hat.tocoo()
    data = s[coo.row] * s[coo.col]
    out = sparse.csr_array((data, (coo.row, coo.col)), shape=(n, n))
    return NormalizedAdjacency(matrix=out)


def induced_subgraph(g: Graph, nodes) -> tuple[Graph, np.ndarray]:
    """Restrict a graph to a node subset, keeping edges inside the subset.

    Returns the subgraph together with the original node ids (ascending) so
    row i of the subgraph corresponds to ids[i] in the parent graph. Features,
    labels, and split marks carry over unchanged.
    """
    if isinstance(nodes, (set, frozenset)):
        nodes = sorted(nodes)
    ids = np.unique(np.asarray(nodes, dtype=np.int64).ravel())
    if ids.size == 0:
        raise ValueError("node subset is empty")
    if ids[0] < 0 or ids[-1] >= g.num_nodes:
        raise ValueError(f"node ids must lie in [0, {g.num_nodes}), got range [{ids[0]}, {ids[-1]}]")
    sub_adj = sparse.csr_array(g.adjacency[ids][:, ids])
    sub = Graph(
        adjacency=sub_adj,
        features=g.features[ids],
        labels=g.labels[ids],
        split=g.split[ids],
    )
    return sub, ids


def disjoint_union(graphs) -> Graph:
    """Stack graphs into one block-diagonal graph with no cross edges."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    d = graphs[0].num_features
    for g in graphs:
        if g.num_features != d:
            raise ValueError(f"feature dims differ: {g.num_features} vs {d}")
    adj = sparse.block_diag([g.adjacency for g in graphs], format="csr")
    return Graph(
        adjacency=sparse.csr_array(adj),
        features=np.vstack([g.features for g in graphs]),
        labels=np.concatenate([g.labels for g in graphs]),
        split=np.concatenate([g.split for g in graphs]),
    )


def assign_splits(g: Graph, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> Graph:
    """Redraw train/val/test marks, stratified by class.

    Within every class the node set is permuted and cut into train/val/test
    parts sized by largest-remainder apportionment of `fractions`; parts with
    positive fraction get at least one node. Classes too small to honor that
    are reported by id.
    """
    f = np.asarray(fractions, dtype=np.float64)
    if f.shape != (3,):
        raise ValueError("fractions must have exactly three entries (train, val, test)")
    if np.any(f < 0.0):
        raise ValueError("fractions must be nonnegative")
    if abs(f.sum() - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {f.sum()!r}")
    parts = int(np.count_nonzero(f > 0.0))
    if parts == 0:
        raise ValueError("at least one fraction must be positive")
    rng = derive_rng(seed, _SPLIT_SALT)
    split = np.empty(g.num_nodes, dtype=np.int8)
    for c in range(g.num_classes):
        ids = np.flatnonzero(g.labels == c)
        if ids.size < parts:
            raise ValueError(
                f"class {c} has only {ids.size} node(s), cannot fill {parts} split parts"
            )
        counts = largest_remainder(f, ids.size, floor=1)
        perm = rng.permutation(ids)
        hi_train = counts[0]
        hi_val = counts[0] + counts[1]
        split[perm[:hi_train]] = TRAIN
        split[perm[hi_train:hi_val]] = VAL
        split[perm[hi_val:]] = TEST
    return replace(g, split=split)


@dataclass(frozen=True)
class Task:
    """One step of a stream: the subgraph induced on a batch of classes."""

    incoming: Graph
    class_set: tuple[int, ...]
    index: int
    node_ids: np.ndarray

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("task index must be 1-based")
        if not self.class_set:
            raise ValueError("task class set is empty")


@dataclass(frozen=True)
class TaskStream:
    """Ordered tasks carved out of one dataset, with disjoint class sets."""

    tasks: tuple[Task, ...]
    num_classes: int
    feature_dim: int

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i: int) -> Task:
        return self.tasks[i]


def build_task_stream(
    g: Graph,
    classes_per_task: int = 2,
    split_fractions=(0.6, 0.2, 0.2),
    seed: int = 0,
) -> TaskStream:
    """Slice a graph into a class-incremental task stream.

    Classes are grouped in ascending id order, `classes_per_task` at a time
    (the last task keeps any remainder). Task k's incoming graph is the
    subgraph induced on the nodes of its classes only, so no edges cross
    task boundaries. When `split_fractions` is None the split marks already
    present on `g` are kept; otherwise marks are redrawn with assign_splits.
    """
    if classes_per_task < 1:
        raise ValueError("classes_per_task must be at least 1")
    present = np.unique(g.labels)
    if present.size != g.num_classes:
        missing = sorted(set(range(g.num_classes)) - set(present.tolist()))
        raise ValueError(f"class ids must be contiguous from 0; missing {missing}")
    if split_fractions is not None:
        g = assign_splits(g, split_fractions, seed)
    tasks = []
    for k, lo in enumerate(range(0, g.num_classes, classes_per_task), start=1):
        class_set = tuple(range(lo, min(lo + classes_per_task, g.num_classes)))
        nodes = np.flatnonzero(np.isin(g.labels, class_set))
        sub, ids = induced_subgraph(g, nodes)
        if not np.any(sub.train_mask):
            raise ValueError(f"task {k} (classes {class_set}) has no training nodes")
        if not np.any(sub.test_mask):
            raise ValueError(f"task {k} (classes {class_set}) has no test nodes")
        tasks.append(Task(incoming=sub, class_set=class_set, index=k, node_ids=ids))
    return TaskStream(tasks=tuple(tasks), num_classes=g.num_classes, feature_dim=g.num_features)


def sbm_generate(
    blocks: int,
    nodes_per_block: int,
    p_in: float,
    p_out: float,
    feature_dim: int,
    feature_separation: float,
    seed: int = 0,
) -> Graph:
    """Sample a stochastic block model graph with Gaussian block features.

    Node i in block b gets features N(separation * e_b, I), so blocks are
    linearly separable in expectation when separation > 0. Edges are drawn
    independently with probability p_in inside a block and p_out across
    blocks. Labels equal block ids; split marks default to all-train and are
    usually redrawn downstream.
    """
    if blocks < 1 or nodes_per_block < 1:
        raise ValueError("blocks and nodes_per_block must be positive")
    if feature_dim < blocks:
        raise ValueError(
            f"feature_dim must be at least the block count, got {feature_dim} < {blocks}"
        )
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {p}")
    if p_out > p_in:
        raise ValueError(f"p_out must not exceed p_in, got {p_out} > {p_in}")
    rng = np.random.default_rng(seed)
    n = blocks * nodes_per_block
    labels = np.repeat(np.arange(blocks, dtype=np.int64), nodes_per_block)
    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    rows, cols = np.nonzero(upper)
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    adj = sparse.csr_array((np.ones(r.size, dtype=np.float64), (r, c)), shape=(n, n))
    features = rng.standard_normal((n, feature_dim))
    features[np.arange(n), labels] += feature_separation
    return Graph(
        adjacency=adj,
        features=features,
        labels=labels,
        split=np.zeros(n, dtype=np.int8),
    )
