"""Shared fixtures: small hand graphs plus one expensive scheme grid.

The grid (five scheme variants, three seeds, the standard synthetic
stream) backs both the ordering assertions in test_acceptance and the
forgetting checks in test_trainer, so it is built once per session.
"""

import time

import numpy as np
import pytest
from scipy import sparse

from cglearn import Graph, continual_run
from cglearn.cli import (
    ExperimentConfig,
    build_stream,
    make_condense_config,
    make_scheme,
    make_train_config,
)

GRID_SCHEMES = (
    ("finetune", None),
    ("joint", None),
    ("tim", "cgm"),
    ("tim", "random_sample"),
    ("replay_plain", "cgm"),
)
GRID_SEEDS = (0, 1, 2)


def make_graph(edges, labels, split=None, features=None, feature_dim=2):
    """Build a Graph from an undirected edge list and per-node labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    rows = [u for u, v in edges] + [v for u, v in edges]
    cols = [v for u, v in edges] + [u for u, v in edges]
    adj = sparse.csr_array(
        (np.ones(len(rows)), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(n, n),
    )
    if features is None:
        features = np.arange(n * feature_dim, dtype=np.float64).reshape(n, feature_dim)
    if split is None:
        split = np.zeros(n, dtype=np.int8)
    return Graph(adj, np.asarray(features, dtype=np.float64), labels, np.asarray(split, dtype=np.int8))


def standard_config(**overrides):
    """ExperimentConfig for the standard acceptance stream."""
    return ExperimentConfig(**overrides)


def run_scheme(kind, policy, seed, il_mode="class_il"):
    cfg = standard_config(scheme_kind=kind, bank_policy=policy, seed=seed, il_mode=il_mode)
    stream = build_stream(cfg)
    return continual_run(
        stream,
        make_scheme(cfg),
        budget_ratio=cfg.budget_ratio,
        condense_config=make_condense_config(cfg, stream.feature_dim),
        train_config=make_train_config(cfg),
    )


@pytest.fixture(scope="session")
def scheme_grid():
    """{(kind, policy, seed): ContinualRunResult} plus build wall time."""
    start = time.perf_counter()
    grid = {}
    for kind, policy in GRID_SCHEMES:
        for seed in GRID_SEEDS:
            grid[(kind, policy, seed)] = run_scheme(kind, policy, seed)
    grid["elapsed"] = time.perf_counter() - start
    return grid
