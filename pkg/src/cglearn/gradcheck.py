"""Finite-difference verification of every handwritten gradient."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .condense import mmd_grad, mmd_loss
from .encoders import EncoderConfig, GcnParams, gcn_backward, gcn_forward, init_random_encoder
from .graph import Graph, normalize_adjacency

DEFAULT_EPS = 1e-5
ENCODER_TOL = 1e-4
MMD_TOL = 1e-6


def central_difference(f, x: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Two-sided finite-difference gradient of a scalar function, entry by entry."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        grad[idx] = (f(xp) - f(xm)) / (2.0 * eps)
        it.iternext()
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """max |a-b| / max(|a|, |b|, floor), elementwise; 0 for empty arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def _random_graph(rng: np.random.Generator, n: int, d: int) -> Graph:
    upper = np.triu(rng.random((n, n)) < 0.4, k=1)
    rows, cols = np.nonzero(upper)
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    adj = sparse.csr_array((np.ones(r.size), (r, c)), shape=(n, n))
    return Graph(
        adjacency=adj,
        features=rng.standard_normal((n, d)),
        labels=rng.integers(0, 3, size=n),
        split=np.zeros(n, dtype=np.int8),
    )


def _encoder_case(seed: int, architecture: str):
    """One randomized check instance, regenerated until it sits safely away
    from relu kinks (a two-sided difference is not a valid oracle there)."""
    attempt = 0
    while True:
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt, 0x6664]))
        n = int(rng.integers(5, 11))
        d, h, o = 4, 6, 3
        g = _random_graph(rng, n, d)
        adj = normalize_adjacency(g)
        cfg = EncoderConfig(in_dim=d, hidden_dim=h, out_dim=o, architecture=architecture)
        params = init_random_encoder(cfg, int(rng.integers(0, 2**31)))
        x = g.features
        probe = rng.standard_normal((n, o))
        if architecture == "gcn":
            pre = (adj.matrix @ x) @ params.w1
            if np.min(np.abs(pre)) < 1e-4:
                attempt += 1
                continue
        return adj, x, params, cfg, probe


def check_encoder_gradients(architecture: str, seeds=range(20), eps: float = DEFAULT_EPS) -> dict:
    """Max relative error of d_w1, d_w2, d_x against central differences.

    The scalar functional is sum(probe * embeddings) for a fixed random
    probe, whose embedding gradient is exactly the probe.
    """
    worst = {"d_w1": 0.0, "d_w2": 0.0, "d_x": 0.0}
    for seed in seeds:
        adj, x, params, cfg, probe = _encoder_case(int(seed), architecture)

        def value(w1=None, w2=None, feats=None):
            p = GcnParams(
                w1=params.w1 if w1 is None else w1,
                w2=params.w2 if w2 is None else w2,
            )
            emb, _ = gcn_forward(adj, x if feats is None else feats, p, cfg)
            return float((probe * emb).sum())

        _, cache = gcn_forward(adj, x, params, cfg)
        d_w1, d_w2, d_x = gcn_backward(cache, probe)
        fd_w1 = central_difference(lambda w: value(w1=w), params.w1, eps)
        fd_w2 = central_difference(lambda w: value(w2=w), params.w2, eps)
        fd_x = central_difference(lambda f: value(feats=f), x, eps)
        worst["d_w1"] = max(worst["d_w1"], max_relative_error(d_w1, fd_w1))
        worst["d_w2"] = max(worst["d_w2"], max_relative_error(d_w2, fd_w2))
        worst["d_x"] = max(worst["d_x"], max_relative_error(d_x, fd_x))
    return worst


def check_mmd_gradient(seeds=range(20), eps: float = DEFAULT_EPS) -> float:
    """Max relative error of mmd_grad against central differences."""
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6d6d64]))
        n, b, dim = 12, 5, 4
        labels = rng.integers(0, 3, size=n)
        labels[:3] = [0, 1, 2]
        labels_cond = np.array([0, 0, 1, 2, 2])
        emb = rng.standard_normal((n, dim))
        emb_cond = rng.standard_normal((b, dim))
        analytic = mmd_grad(emb, labels, emb_cond, labels_cond)
        fd = central_difference(lambda e: mmd_loss(emb, labels, e, labels_cond), emb_cond, eps)
        worst = max(worst, max_relative_error(analytic, fd))
    return worst


def check_condense_gradient(seeds=range(20), eps: float = DEFAULT_EPS) -> float:
    """Max relative error for the full objective: matching loss of encoded
    synthetic features against fixed target embeddings, differentiated
    through the encoder down to the features."""
    from .graph import NormalizedAdjacency

    worst = 0.0
    for seed in seeds:
        attempt = 0
        while True:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), attempt, 0x636764]))
            n, b, d, h, o = 10, 4, 4, 6, 3
            g = _random_graph(rng, n, d)
            labels = rng.integers(0, 2, size=n)
            labels[:2] = [0, 1]
            g = Graph(adjacency=g.adjacency, features=g.features, labels=labels, split=g.split)
            cfg = EncoderConfig(in_dim=d, hidden_dim=h, out_dim=o, architecture="gcn")
            params = init_random_encoder(cfg, int(rng.integers(0, 2**31)))
            adj = normalize_adjacency(g)
            emb_target, _ = gcn_forward(adj, g.features, params, cfg)
            labels_cond = np.array([0, 0, 1, 1])
            x_cond = rng.standard_normal((b, d))
            ident = NormalizedAdjacency.identity(b)
            pre = x_cond @ params.w1
            if np.min(np.abs(pre)) < 1e-4:
                attempt += 1
                continue
            break

        def objective(xc):
            emb_c, _ = gcn_forward(ident, xc, params, cfg)
            return mmd_loss(emb_target, g.labels, emb_c, labels_cond)

        emb_c, cache = gcn_forward(ident, x_cond, params, cfg)
        d_emb = mmd_grad(emb_target, g.labels, emb_c, labels_cond)
        _, _, analytic = gcn_backward(cache, d_emb)
        fd = central_difference(objective, x_cond, eps)
        worst = max(worst, max_relative_error(analytic, fd))
    return worst


def run_gradient_checks(num_seeds: int = 20, eps: float = DEFAULT_EPS):
    """All checks at once; returns (name, max_err, tol, passed) records."""
    seeds = range(num_seeds)
    records = []
    for arch in ("gcn", "sgc"):
        worst = check_encoder_gradients(arch, seeds, eps)
        for name in ("d_w1", "d_w2", "d_x"):
            records.append((f"{arch} {name}", worst[name], ENCODER_TOL, worst[name] < ENCODER_TOL))
    err = check_mmd_gradient(seeds, eps)
    records.append(("matching loss d_emb", err, MMD_TOL, err < MMD_TOL))
    err = check_condense_gradient(seeds, eps)
    records.append(("matching objective d_x", err, ENCODER_TOL, err < ENCODER_TOL))
    return records
