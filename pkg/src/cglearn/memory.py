"""Replay memory: budget accounting, bank growth, and sampling baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .graph import Graph, disjoint_union, induced_subgraph, largest_remainder
from .seeding import derive_rng

CGM = "cgm"
RANDOM_SAMPLE = "random_sample"
CLASS_BALANCED_SAMPLE = "class_balanced_sample"
BANK_POLICIES = (CGM, RANDOM_SAMPLE, CLASS_BALANCED_SAMPLE)


@dataclass(frozen=True)
class SampledGraph:
    """A stored subgraph replayed for one task (also wraps full graphs for joint training)."""

    graph: Graph
    source_task: int = 1

    def __post_init__(self):
        if self.source_task < 1:
            raise ValueError("source_task must be 1-based")

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def labels(self) -> np.ndarray:
        return self.graph.labels

    def to_graph(self) -> Graph:
        return self.graph


@dataclass(frozen=True)
class BankPolicy:
    """How each incoming task is reduced before storage."""

    kind: str

    def __post_init__(self):
        if self.kind not in BANK_POLICIES:
            raise ValueError(f"unknown bank policy {self.kind!r}, expected one of {BANK_POLICIES}")


@dataclass(frozen=True)
class MemoryBank:
    """Replayed graphs in task order; entry i must come from task i+1."""

    entries: tuple = ()
    policy: str = CGM

    def __post_init__(self):
        if self.policy not in BANK_POLICIES:
            raise ValueError(f"unknown bank policy {self.policy!r}, expected one of {BANK_POLICIES}")
        for i, entry in enumerate(self.entries):
            if entry.source_task != i + 1:
                raise ValueError(
                    f"bank entry {i} has source_task {entry.source_task}, expected {i + 1}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def num_nodes(self) -> int:
        return sum(e.num_nodes for e in self.entries)


def budget_for_task(total_train_nodes: int, budget_ratio: float, num_tasks: int) -> int:
    """Per-task replay size: ceil(ratio * total_train_nodes / num_tasks).

    The ratio is taken at its decimal face value so ceil is exact; the binary
    float closest to 0.01 times 2000 must still yield 2 for 10 tasks, never 3.
    """
    if total_train_nodes < 1:
        raise ValueError("total_train_nodes must be positive")
    if num_tasks < 1:
        raise ValueError("num_tasks must be positive")
    if not 0.0 < budget_ratio <= 1.0:
        raise ValueError(f"budget_ratio must lie in (0, 1], got {budget_ratio}")
    ratio = Fraction(str(budget_ratio))
    return math.ceil(ratio * total_train_nodes / num_tasks)


def update_memory(bank: MemoryBank, replayed) -> MemoryBank:
    """Append one task's replayed graph; the bank itself is never rewritten."""
    if replayed.source_task != len(bank.entries) + 1:
        raise ValueError(
            f"expected an entry for task {len(bank.entries) + 1}, got source_task {replayed.source_task}"
        )
    return MemoryBank(entries=bank.entries + (replayed,), policy=bank.policy)


def sample_replayed(g: Graph, budget: int, policy: str, seed: int, source_task: int = 1) -> SampledGraph:
    """Pick `budget` training nodes of `g` and store their induced subgraph.

    random_sample draws uniformly without replacement from all training
    nodes. class_balanced_sample spreads the budget over the training
    classes by largest remainder (floor one per class) and takes the nodes
    nearest to their class mean feature vector, lower node id on ties.
    """
    if policy not in (RANDOM_SAMPLE, CLASS_BALANCED_SAMPLE):
        raise ValueError(f"unknown sampling policy {policy!r}")
    train_ids = np.flatnonzero(g.train_mask)
    if train_ids.size == 0:
        raise ValueError("graph has no training nodes to sample")
    if budget < 1:
        raise ValueError("budget must be positive")
    if budget > train_ids.size:
        raise ValueError(
            f"budget {budget} exceeds the {train_ids.size} available training nodes"
        )
    train_labels = g.labels[train_ids]
    classes, class_counts = np.unique(train_labels, return_counts=True)
    if budget < classes.size:
        raise ValueError(
            f"budget {budget} cannot cover {classes.size} classes at one node each"
        )
    rng = derive_rng(seed, source_task)
    if policy == RANDOM_SAMPLE:
        chosen = rng.choice(train_ids, size=budget, replace=False)
    else:
        counts = largest_remainder(class_counts, budget, floor=1)
        picks = []
        for c, k in zip(classes, counts):
            pool = train_ids[train_labels == c]
            center = g.features[pool].mean(axis=0)
            dist = np.linalg.norm(g.features[pool] - center, axis=1)
            # stable sort keeps the lower node id on distance ties
            order = np.argsort(dist, kind="stable")
            picks.append(pool[order[: int(k)]])
        chosen = np.concatenate(picks)
    sub, _ = induced_subgraph(g, chosen)
    return SampledGraph(graph=sub, source_task=source_task)


def merge_bank(bank: MemoryBank) -> Graph:
    """Disjoint union of every stored graph, in task order.

    Condensed entries enter as edgeless all-train blocks (their propagation
    identity is restored by re-normalization); sampled and full entries keep
    their stored edges and split marks, so training code can keep selecting
    by train mask after the merge.
    """
    if not bank.entries:
        raise ValueError("memory bank is empty")
    return disjoint_union(e.to_graph() for e in bank.entries)
