"""Two-layer graph convolutional encoders with handwritten gradients.

No autograd anywhere: forward passes cache the intermediates and the
backward pass applies the chain rule explicitly. Both architectures share
the parameter container (two weight matrices, no biases):

    gcn:  E = A (act(A X W1)) W2
    sgc:  E = (A^depth X) W1 W2          (no activation between layers)

where A is a NormalizedAdjacency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import NormalizedAdjacency

ARCHITECTURES = ("gcn", "sgc")
ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class EncoderConfig:
    """Shape and wiring of a two-layer encoder."""

    in_dim: int
    hidden_dim: int
    out_dim: int
    architecture: str = "gcn"
    activation: str = "relu"
    depth: int = 2

    def __post_init__(self):
        if min(self.in_dim, self.hidden_dim, self.out_dim) < 1:
            raise ValueError("all encoder dimensions must be positive")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}, expected one of {ARCHITECTURES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")


@dataclass(frozen=True)
class GcnParams:
    """Weights of a two-layer encoder: w1 (in, hidden), w2 (hidden, out)."""

    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2:
            raise ValueError("weights must be 2-d arrays")
        if w1.shape[1] != w2.shape[0]:
            raise ValueError(f"hidden dims disagree: w1 {w1.shape} vs w2 {w2.shape}")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)


@dataclass
class ForwardCache:
    """Intermediates saved by gcn_forward for the backward pass."""

    config: EncoderConfig
    params: GcnParams
    adjacency: NormalizedAdjacency
    x_prop: np.ndarray
    pre_act: np.ndarray | None
    hidden_out: np.ndarray
    hidden_prop: np.ndarray | None


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_random_encoder(config: EncoderConfig, seed: int) -> GcnParams:
    """Draw Glorot-uniform weights; w1 first, then w2, from one stream."""
    rng = np.random.default_rng(seed)
    w1 = glorot_uniform(rng, config.in_dim, config.hidden_dim)
    w2 = glorot_uniform(rng, config.hidden_dim, config.out_dim)
    return GcnParams(w1=w1, w2=w2)


def _apply_activation(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(pre, 0.0)
    return pre


def gcn_forward(
    adjacency: NormalizedAdjacency,
    features: np.ndarray,
    params: GcnParams,
    config: EncoderConfig,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the encoder; returns (embeddings, cache for gcn_backward)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be 2-d")
    n, d = x.shape
    if adjacency.num_nodes != n:
        raise ValueError(f"adjacency is {adjacency.num_nodes} nodes but features have {n} rows")
    if d != config.in_dim or params.w1.shape[0] != config.in_dim:
        raise ValueError(
            f"feature dim {d}, config in_dim {config.in_dim}, and w1 rows "
            f"{params.w1.shape[0]} must all agree"
        )
    if params.w1.shape[1] != config.hidden_dim or params.w2.shape != (config.hidden_dim, config.out_dim):
        raise ValueError("parameter shapes do not match the encoder config")
    a = adjacency.matrix
    if config.architecture == "gcn":
        x_prop = a @ x
        pre_act = x_prop @ params.w1
        hidden_out = _apply_activation(pre_act, config.activation)
        hidden_prop = a @ hidden_out
        emb = hidden_prop @ params.w2
        cache = ForwardCache(config, params, adjacency, x_prop, pre_act, hidden_out, hidden_prop)
    else:
        x_prop = x
        for _ in range(config.depth):
            x_prop = a @ x_prop
        hidden_out = x_prop @ params.w1
        emb = hidden_out @ params.w2
        cache = ForwardCache(config, params, adjacency, x_prop, None, hidden_out, None)
    return emb, cache


def gcn_backward(cache: ForwardCache, d_emb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagate d(loss)/d(embeddings) through the cached forward pass.

    Returns (d_w1, d_w2, d_features). The adjacency is symmetric, so A^T = A
    throughout.
    """
    d_emb = np.asarray(d_emb, dtype=np.float64)
    cfg = cache.config
    n = cache.x_prop.shape[0]
    if d_emb.shape != (n, cfg.out_dim):
        raise ValueError(f"d_emb shape {d_emb.shape} does not match embeddings ({n}, {cfg.out_dim})")
    a = cache.adjacency.matrix
    w1, w2 = cache.params.w1, cache.params.w2
    if cfg.architecture == "gcn":
        d_w2 = cache.hidden_prop.T @ d_emb
        d_hidden = a @ (d_emb @ w2.T)
        if cfg.activation == "relu":
            d_pre = d_hidden * (cache.pre_act > 0.0)
        else:
            d_pre = d_hidden
        d_w1 = cache.x_prop.T @ d_pre
        d_x = a @ (d_pre @ w1.T)
    else:
        d_w2 = cache.hidden_out.T @ d_emb
        d_mid = d_emb @ w2.T
        d_w1 = cache.x_prop.T @ d_mid
        d_x = d_mid @ w1.T
        for _ in range(cfg.depth):
            d_x = a @ d_x
    return d_w1, d_w2, d_x


def _as_index_array(mask, n: int) -> np.ndarray:
    """Accept a boolean mask, an index array, or a set of node ids."""
    if isinstance(mask, (set, frozenset)):
        mask = sorted(mask)
    arr = np.asarray(mask)
    if arr.dtype == np.bool_:
        if arr.shape != (n,):
            raise ValueError(f"boolean mask length {arr.shape} does not match {n} rows")
        return np.flatnonzero(arr)
    idx = arr.astype(np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(f"mask indices must lie in [0, {n})")
    return idx


def softmax_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    mask,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the masked rows, with d(loss)/d(logits).

    Rows outside the mask contribute nothing and get a zero gradient. Uses
    the max-shifted log-sum-exp so large logits do not overflow.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError("logits must be (n, c) with one label per row")
    idx = _as_index_array(mask, logits.shape[0])
    if idx.size == 0:
        raise ValueError("mask selects no rows")
    weights = np.zeros(logits.shape[0], dtype=np.float64)
    weights[idx] = 1.0 / idx.size
    return weighted_cross_entropy(logits, labels, weights)


def weighted_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Sum of per-row weights times cross-entropy, with the logits gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    n, c = logits.shape
    if labels.shape != (n,) or weights.shape != (n,):
        raise ValueError("labels and weights must have one entry per logits row")
    active = np.flatnonzero(weights)
    if active.size and labels[active].max() >= c:
        bad = int(labels[active].max())
        raise ValueError(f"label {bad} out of range for {c} logit columns")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    picked = log_probs[np.arange(n), np.clip(labels, 0, c - 1)]
    loss = float(-(weights * picked).sum())
    probs = np.exp(log_probs)
    d_logits = probs * weights[:, None]
    d_logits[np.arange(n), np.clip(labels, 0, c - 1)] -= weights
    return loss, d_logits
