"""Budget-sized synthetic replay graphs fit by class-mean embedding matching.

The condensed graph keeps only self-loops, so after normalization its
propagation matrix is the identity and the synthetic features pass through
the encoder as plain rows. Fitting matches, per class, the mean embedding of
the original training nodes against the mean embedding of the synthetic
rows, across a stream of randomly initialized encoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .encoders import EncoderConfig, gcn_backward, gcn_forward, init_random_encoder
from .graph import Graph, NormalizedAdjacency, induced_subgraph, largest_remainder, normalize_adjacency
from .seeding import derive_seed

INIT_MODES = ("sample", "noise")

_INIT_SALT = 0x696e6974
_ENCODER_SALT = 0x656e6373


@dataclass(frozen=True)
class CondensedGraph:
    """Synthetic replay nodes for one task: features, labels, self-loop adjacency."""

    features: np.ndarray
    labels: np.ndarray
    adjacency: sparse.csr_array
    source_task: int = 1

    def __post_init__(self):
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("condensed features must be a nonempty 2-d array")
        b = features.shape[0]
        if labels.shape != (b,):
            raise ValueError(f"labels shape {labels.shape} does not match {b} rows")
        if labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        if not sparse.issparse(self.adjacency):
            raise ValueError("adjacency must be a scipy sparse matrix")
        adj = sparse.csr_array(self.adjacency, dtype=np.float64)
        if adj.shape != (b, b) or adj.nnz != b or not np.all(adj.diagonal() == 1.0):
            raise ValueError("condensed adjacency must be exactly the identity (self-loops only)")
        if self.source_task < 1:
            raise ValueError("source_task must be 1-based")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "adjacency", adj)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def to_graph(self) -> Graph:
        """View as an edgeless all-train graph; normalization restores the self-loops."""
        b = self.num_nodes
        return Graph(
            adjacency=sparse.csr_array((b, b), dtype=np.float64),
            features=self.features,
            labels=self.labels,
            split=np.zeros(b, dtype=np.int8),
        )


@dataclass(frozen=True)
class CondenseConfig:
    """Fitting knobs: encoder shape, number of random encoders, step size."""

    encoder: EncoderConfig
    num_encoders: int = 200
    feature_lr: float = 0.01
    init_mode: str = "sample"

    def __post_init__(self):
        if self.num_encoders < 0:
            raise ValueError("num_encoders must be nonnegative")
        if not self.feature_lr > 0.0:
            raise ValueError("feature_lr must be positive")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"unknown init_mode {self.init_mode!r}, expected one of {INIT_MODES}")


def init_condensed(g: Graph, budget: int, init_mode: str, seed: int, source_task: int = 1) -> CondensedGraph:
    """Allocate `budget` synthetic nodes over the training classes of `g`.

    Per-class counts follow largest-remainder apportionment of the training
    label histogram with a floor of one node per present class. Features are
    either real training rows resampled per class ("sample") or standard
    normal noise ("noise"); labels come out grouped by ascending class id.
    """
    if init_mode not in INIT_MODES:
        raise ValueError(f"unknown init_mode {init_mode!r}, expected one of {INIT_MODES}")
    train_ids = np.flatnonzero(g.train_mask)
    if train_ids.size == 0:
        raise ValueError("graph has no training nodes to condense")
    train_labels = g.labels[train_ids]
    classes, class_counts = np.unique(train_labels, return_counts=True)
    if budget < classes.size:
        raise ValueError(
            f"budget {budget} cannot cover {classes.size} classes at one node each"
        )
    counts = largest_remainder(class_counts, budget, floor=1)
    labels = np.repeat(classes, counts)
    rng = np.random.default_rng(seed)
    if init_mode == "sample":
        rows = []
        for c, k in zip(classes, counts):
            pool = train_ids[train_labels == c]
            chosen = rng.choice(pool, size=int(k), replace=bool(k > pool.size))
            rows.append(g.features[chosen])
        features = np.vstack(rows)
    else:
        features = rng.standard_normal((int(budget), g.num_features))
    return CondensedGraph(
        features=features,
        labels=labels,
        adjacency=sparse.eye_array(int(budget), format="csr", dtype=np.float64),
        source_task=source_task,
    )


def _class_stats(emb: np.ndarray, labels: np.ndarray):
    classes = np.unique(labels)
    means = np.stack([emb[labels == c].mean(axis=0) for c in classes])
    counts = np.array([(labels == c).sum() for c in classes], dtype=np.int64)
    return classes, means, counts


def _check_class_sets(classes: np.ndarray, classes_cond: np.ndarray):
    extra = np.setdiff1d(classes_cond, classes)
    if extra.size:
        raise ValueError(f"condensed class(es) {extra.tolist()} not present in the original")
    missing = np.setdiff1d(classes, classes_cond)
    if missing.size:
        raise ValueError(f"original class(es) {missing.tolist()} have no condensed rows")


def mmd_loss(
    emb: np.ndarray,
    labels: np.ndarray,
    emb_cond: np.ndarray,
    labels_cond: np.ndarray,
) -> float:
    """Sum over classes of r_c * ||mean_c(emb) - mean_c(emb_cond)||^2.

    r_c is the share of rows of `emb` in class c. Every class present in
    `labels` must also appear in `labels_cond` and vice versa.
    """
    emb = np.asarray(emb, dtype=np.float64)
    emb_cond = np.asarray(emb_cond, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    labels_cond = np.asarray(labels_cond, dtype=np.int64)
    if emb.shape[0] != labels.size or emb_cond.shape[0] != labels_cond.size:
        raise ValueError("each embedding row needs a label")
    if emb.shape[1] != emb_cond.shape[1]:
        raise ValueError(f"embedding dims differ: {emb.shape[1]} vs {emb_cond.shape[1]}")
    classes, means, counts = _class_stats(emb, labels)
    classes_c, means_c, _ = _class_stats(emb_cond, labels_cond)
    _check_class_sets(classes, classes_c)
    ratios = counts / labels.size
    diffs = means - means_c
    return float((ratios * (diffs * diffs).sum(axis=1)).sum())


def mmd_grad(
    emb: np.ndarray,
    labels: np.ndarray,
    emb_cond: np.ndarray,
    labels_cond: np.ndarray,
) -> np.ndarray:
    """Gradient of mmd_loss with respect to `emb_cond`.

    Row j of class c receives r_c * 2 (mean_c(emb_cond) - mean_c(emb)) / b_c
    where b_c is the number of condensed rows of class c.
    """
    emb = np.asarray(emb, dtype=np.float64)
    emb_cond = np.asarray(emb_cond, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    labels_cond = np.asarray(labels_cond, dtype=np.int64)
    if emb.shape[0] != labels.size or emb_cond.shape[0] != labels_cond.size:
        raise ValueError("each embedding row needs a label")
    if emb.shape[1] != emb_cond.shape[1]:
        raise ValueError(f"embedding dims differ: {emb.shape[1]} vs {emb_cond.shape[1]}")
    classes, means, counts = _class_stats(emb, labels)
    classes_c, means_c, counts_c = _class_stats(emb_cond, labels_cond)
    _check_class_sets(classes, classes_c)
    ratios = counts / labels.size
    grad = np.zeros_like(emb_cond)
    for i, c in enumerate(classes):
        rows = labels_cond == c
        grad[rows] = ratios[i] * 2.0 * (means_c[i] - means[i]) / counts_c[i]
    return grad


def condense(g: Graph, budget: int, config: CondenseConfig, seed: int, source_task: int = 1) -> CondensedGraph:
    """Fit a condensed replay graph to the training portion of `g`.

    The target embeddings come from the subgraph induced on training nodes.
    For each of `num_encoders` freshly initialized random encoders, classes
    are visited in ascending order and the synthetic rows of that class take
    one gradient step on the matching objective (other rows frozen). The
    synthetic adjacency stays the identity throughout; only features move.
    """
    if config.encoder.in_dim != g.num_features:
        raise ValueError(
            f"encoder in_dim {config.encoder.in_dim} does not match feature dim {g.num_features}"
        )
    cond = init_condensed(g, budget, config.init_mode, derive_seed(seed, _INIT_SALT), source_task)
    train_ids = np.flatnonzero(g.train_mask)
    sub, _ = induced_subgraph(g, train_ids)
    adj = normalize_adjacency(sub)
    adj_cond = NormalizedAdjacency.identity(cond.num_nodes)
    classes = np.unique(sub.labels)
    x = cond.features.copy()
    for p in range(config.num_encoders):
        params = init_random_encoder(config.encoder, derive_seed(seed, _ENCODER_SALT, p))
        emb, _ = gcn_forward(adj, sub.features, params, config.encoder)
        for c in classes:
            emb_cond, cache = gcn_forward(adj_cond, x, params, config.encoder)
            d_emb = mmd_grad(emb, sub.labels, emb_cond, cond.labels)
            d_emb[cond.labels != c] = 0.0
            _, _, d_x = gcn_backward(cache, d_emb)
            x = x - config.feature_lr * d_x
    return CondensedGraph(
        features=x,
        labels=cond.labels,
        adjacency=cond.adjacency,
        source_task=source_task,
    )
