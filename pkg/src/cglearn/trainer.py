"""Continual training schemes over a width-growing GCN node classifier.

The classifier is a two-layer GCN whose output width equals the number of
classes seen so far; grow_output appends freshly initialized columns when a
task introduces new classes and keeps every existing weight bit-identical.
All schemes share one optimization loop (full-batch Adam on a softmax
cross-entropy); they differ only in which graphs the loss reads and how the
per-node weights are set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condense import CondenseConfig, condense
from .encoders import EncoderConfig, GcnParams, gcn_backward, gcn_forward, weighted_cross_entropy
from .graph import Graph, TaskStream, normalize_adjacency
from .memory import (
    CGM,
    BANK_POLICIES,
    MemoryBank,
    SampledGraph,
    budget_for_task,
    merge_bank,
    sample_replayed,
    update_memory,
)
from .metrics import PerformanceMatrix
from .seeding import derive_seed

CLASS_IL = "class_il"
TASK_IL = "task_il"
IL_MODES = (CLASS_IL, TASK_IL)

SCHEME_KINDS = ("finetune", "joint", "replay_plain", "replay_ergnn", "replay_ssm", "tim")
_REPLAY_KINDS = ("replay_plain", "replay_ergnn", "replay_ssm")
_BANKED_KINDS = _REPLAY_KINDS + ("tim",)

_INIT_SALT = 0x636c6673
_GROW_SALT = 0x67726f77
_CONDENSE_SALT = 0x636f6e64
_SAMPLE_SALT = 0x73616d70


@dataclass(frozen=True)
class TrainScheme:
    """What the classifier trains on at each task.

    finetune       incoming graph only.
    joint          union of all incoming graphs so far (upper bound).
    replay_*       incoming graph plus the merged bank of earlier tasks,
                   combined by plain, size-weighted, or class-mean losses.
    tim            merged bank only, including the current task's entry.

    `policy` picks how banked entries are built (cgm, random_sample,
    class_balanced_sample) and is required exactly for the banked kinds.
    """

    kind: str
    policy: str | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}, expected one of {SCHEME_KINDS}")
        if self.kind in _BANKED_KINDS:
            if self.policy not in BANK_POLICIES:
                raise ValueError(
                    f"scheme {self.kind!r} needs a bank policy from {BANK_POLICIES}, got {self.policy!r}"
                )
        elif self.policy is not None:
            raise ValueError(f"scheme {self.kind!r} does not take a bank policy")

    @property
    def uses_bank(self) -> bool:
        return self.kind in _BANKED_KINDS or self.kind == "joint"


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and evaluation settings shared by every scheme."""

    epochs: int = 200
    lr: float = 0.01
    hidden_dim: int = 256
    seed: int = 0
    il_mode: str = CLASS_IL

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not self.lr > 0.0:
            raise ValueError("lr must be positive")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if self.il_mode not in IL_MODES:
            raise ValueError(f"unknown il_mode {self.il_mode!r}, expected one of {IL_MODES}")


@dataclass
class ClassifierState:
    """Weights plus Adam moments; the output width grows with new classes."""

    w1: np.ndarray
    w2: np.ndarray
    m_w1: np.ndarray
    v_w1: np.ndarray
    m_w2: np.ndarray
    v_w2: np.ndarray
    step: int
    seed: int

    @classmethod
    def create(cls, in_dim: int, hidden_dim: int, seed: int) -> "ClassifierState":
        """Fresh state with zero output classes; call grow_output before training."""
        if in_dim < 1 or hidden_dim < 1:
            raise ValueError("in_dim and hidden_dim must be positive")
        rng = np.random.default_rng(derive_seed(seed, _INIT_SALT))
        bound = np.sqrt(6.0 / (in_dim + hidden_dim))
        w1 = rng.uniform(-bound, bound, size=(in_dim, hidden_dim))
        w2 = np.zeros((hidden_dim, 0), dtype=np.float64)
        return cls(
            w1=w1,
            w2=w2,
            m_w1=np.zeros_like(w1),
            v_w1=np.zeros_like(w1),
            m_w2=np.zeros_like(w2),
            v_w2=np.zeros_like(w2),
            step=0,
            seed=seed,
        )

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "ClassifierState":
        return ClassifierState(
            w1=self.w1.copy(),
            w2=self.w2.copy(),
            m_w1=self.m_w1.copy(),
            v_w1=self.v_w1.copy(),
            m_w2=self.m_w2.copy(),
            v_w2=self.v_w2.copy(),
            step=self.step,
            seed=self.seed,
        )

    def params(self) -> GcnParams:
        return GcnParams(w1=self.w1, w2=self.w2)

    def encoder_config(self) -> EncoderConfig:
        if self.out_dim < 1:
            raise ValueError("classifier has no output columns yet; grow_output first")
        return EncoderConfig(
            in_dim=self.in_dim,
            hidden_dim=self.hidden_dim,
            out_dim=self.out_dim,
            architecture="gcn",
            activation="relu",
        )


def grow_output(state: ClassifierState, new_classes: int) -> ClassifierState:
    """Append `new_classes` output columns, leaving old weights bit-identical.

    New columns are Glorot-uniform for the grown fan-out and their Adam
    moments start at zero; the seed depends only on (state.seed, new width),
    so the same growth schedule always produces the same weights no matter
    how much training happened in between.
    """
    if new_classes < 0:
        raise ValueError("new_classes must be nonnegative")
    out = state.copy()
    if new_classes == 0:
        return out
    new_width = state.out_dim + new_classes
    rng = np.random.default_rng(derive_seed(state.seed, _GROW_SALT, new_width))
    bound = np.sqrt(6.0 / (state.hidden_dim + new_width))
    block = rng.uniform(-bound, bound, size=(state.hidden_dim, new_classes))
    zeros = np.zeros_like(block)
    out.w2 = np.hstack([out.w2, block])
    out.m_w2 = np.hstack([out.m_w2, zeros])
    out.v_w2 = np.hstack([out.v_w2, zeros])
    return out


def _mean_weights(n: int, idx: np.ndarray) -> np.ndarray:
    w = np.zeros(n, dtype=np.float64)
    w[idx] = 1.0 / idx.size
    return w


def _class_mean_weights(n: int, idx: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Each selected row weighs 1 / (count of its class among the selection)."""
    w = np.zeros(n, dtype=np.float64)
    sel = labels[idx]
    for c in np.unique(sel):
        rows = idx[sel == c]
        w[rows] = 1.0 / rows.size
    return w


def weighted_replay_loss(incoming, memory, kind: str):
    """Combine incoming and memory loss terms for one replay scheme.

    `incoming` and `memory` are (logits, labels, train_index) triples; pass
    memory=None on the first task, where every kind reduces to the incoming
    term alone. Returns (loss, d_logits_incoming, d_logits_memory_or_None).

    replay_plain   unweighted sum of the two mean cross-entropies.
    replay_ergnn   means scaled by the opposite side's node share, so the
                   incoming term carries n_mem/(n_inc+n_mem) and the memory
                   term n_inc/(n_inc+n_mem), with n counting graph nodes.
    replay_ssm     per-class mean cross-entropies on both sides, a balanced
                   sum where each class contributes equally regardless of
                   its node count.
    """
    if kind not in _REPLAY_KINDS:
        raise ValueError(f"unknown replay kind {kind!r}, expected one of {_REPLAY_KINDS}")
    logits_in, labels_in, idx_in = incoming
    idx_in = np.asarray(idx_in, dtype=np.int64)
    if idx_in.size == 0:
        raise ValueError("incoming graph has no training rows")
    n_in = logits_in.shape[0]
    if memory is None:
        if kind == "replay_ssm":
            w_in = _class_mean_weights(n_in, idx_in, labels_in)
        else:
            w_in = _mean_weights(n_in, idx_in)
        loss, d_in = weighted_cross_entropy(logits_in, labels_in, w_in)
        return loss, d_in, None
    logits_mem, labels_mem, idx_mem = memory
    idx_mem = np.asarray(idx_mem, dtype=np.int64)
    if idx_mem.size == 0:
        raise ValueError("memory graph has no training rows")
    n_mem = logits_mem.shape[0]
    if kind == "replay_plain":
        w_in = _mean_weights(n_in, idx_in)
        w_mem = _mean_weights(n_mem, idx_mem)
    elif kind == "replay_ergnn":
        total = n_in + n_mem
        w_in = (n_mem / total) * _mean_weights(n_in, idx_in)
        w_mem = (n_in / total) * _mean_weights(n_mem, idx_mem)
    else:
        w_in = _class_mean_weights(n_in, idx_in, labels_in)
        w_mem = _class_mean_weights(n_mem, idx_mem, labels_mem)
    loss_in, d_in = weighted_cross_entropy(logits_in, labels_in, w_in)
    loss_mem, d_mem = weighted_cross_entropy(logits_mem, labels_mem, w_mem)
    return loss_in + loss_mem, d_in, d_mem


def _adam_step(state: ClassifierState, g_w1: np.ndarray, g_w2: np.ndarray, lr: float):
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    state.step += 1
    t = state.step
    for w, m, v, g in (
        (state.w1, state.m_w1, state.v_w1, g_w1),
        (state.w2, state.m_w2, state.v_w2, g_w2),
    ):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        w -= lr * m_hat / (np.sqrt(v_hat) + eps)


def _training_view(g: Graph):
    """Precompute what the epoch loop needs from one graph."""
    idx = np.flatnonzero(g.train_mask)
    if idx.size == 0:
        raise ValueError("graph has no training nodes")
    return normalize_adjacency(g), g.features, g.labels, idx


def train_task(
    state: ClassifierState,
    task,
    bank: MemoryBank,
    scheme: TrainScheme,
    config: TrainConfig,
) -> ClassifierState:
    """Run `config.epochs` full-batch Adam updates for one task.

    The input state is never mutated; a warm-started copy (weights, moments,
    and step counter carried over) is returned. The bank must already be
    up to date for schemes that read it: tim expects this task's entry to be
    stored, joint expects one full graph per task so far, and the replay
    kinds use strictly earlier entries.
    """
    max_class = max(task.class_set)
    if state.out_dim <= max_class:
        raise ValueError(
            f"classifier has {state.out_dim} outputs but task {task.index} "
            f"uses class {max_class}; grow_output first"
        )
    new = state.copy()
    if config.epochs == 0:
        return new
    kind = scheme.kind
    if kind == "finetune":
        main = _training_view(task.incoming)
        mem = None
        replay_kind = None
    elif kind == "tim":
        if len(bank.entries) != task.index or bank.entries[-1].source_task != task.index:
            raise ValueError(
                f"tim at task {task.index} needs the bank to hold entries for tasks 1..{task.index}"
            )
        main = _training_view(merge_bank(bank))
        mem = None
        replay_kind = None
    elif kind == "joint":
        if len(bank.entries) != task.index:
            raise ValueError(
                f"joint at task {task.index} needs {task.index} stored graphs, found {len(bank.entries)}"
            )
        main = _training_view(merge_bank(bank))
        mem = None
        replay_kind = None
    else:
        past = tuple(e for e in bank.entries if e.source_task < task.index)
        if task.index > 1 and len(past) != task.index - 1:
            raise ValueError(
                f"replay at task {task.index} needs entries for tasks 1..{task.index - 1}, "
                f"found {len(past)}"
            )
        main = _training_view(task.incoming)
        mem = _training_view(merge_bank(MemoryBank(entries=past, policy=bank.policy))) if past else None
        replay_kind = kind
    adj_m, x_m, y_m, idx_m = main
    cfg = new.encoder_config()
    for _ in range(config.epochs):
        logits_m, cache_m = gcn_forward(adj_m, x_m, new.params(), cfg)
        if replay_kind is None:
            w = _mean_weights(logits_m.shape[0], idx_m)
            _, d_m = weighted_cross_entropy(logits_m, y_m, w)
            g_w1, g_w2, _ = gcn_backward(cache_m, d_m)
        else:
            if mem is not None:
                adj_r, x_r, y_r, idx_r = mem
                logits_r, cache_r = gcn_forward(adj_r, x_r, new.params(), cfg)
                _, d_m, d_r = weighted_replay_loss(
                    (logits_m, y_m, idx_m), (logits_r, y_r, idx_r), replay_kind
                )
                g_w1, g_w2, _ = gcn_backward(cache_m, d_m)
                r_w1, r_w2, _ = gcn_backward(cache_r, d_r)
                g_w1 += r_w1
                g_w2 += r_w2
            else:
                _, d_m, _ = weighted_replay_loss((logits_m, y_m, idx_m), None, replay_kind)
                g_w1, g_w2, _ = gcn_backward(cache_m, d_m)
        _adam_step(new, g_w1, g_w2, config.lr)
    return new


def evaluate(state: ClassifierState, stream: TaskStream, upto: int, il_mode: str) -> np.ndarray:
    """Test accuracy on tasks 1..upto under the given incremental setting.

    class_il takes the argmax over every output column; task_il restricts the
    argmax to the columns of each task's own class set, so its accuracy can
    never fall below the class_il value on the same logits.
    """
    if il_mode not in IL_MODES:
        raise ValueError(f"unknown il_mode {il_mode!r}, expected one of {IL_MODES}")
    if not 1 <= upto <= len(stream.tasks):
        raise ValueError(f"upto must lie in [1, {len(stream.tasks)}], got {upto}")
    cfg = state.encoder_config()
    accs = np.empty(upto, dtype=np.float64)
    for task in stream.tasks[:upto]:
        if max(task.class_set) >= state.out_dim:
            raise ValueError(
                f"task {task.index} uses class {max(task.class_set)} but the classifier "
                f"has {state.out_dim} outputs"
            )
        g = task.incoming
        logits, _ = gcn_forward(normalize_adjacency(g), g.features, state.params(), cfg)
        test = np.flatnonzero(g.test_mask)
        if test.size == 0:
            raise ValueError(f"task {task.index} has no test nodes")
        if il_mode == CLASS_IL:
            pred = np.argmax(logits[test], axis=1)
        else:
            cols = np.asarray(task.class_set, dtype=np.int64)
            pred = cols[np.argmax(logits[np.ix_(test, cols)], axis=1)]
        accs[task.index - 1] = float(np.mean(pred == g.labels[test]))
    return accs


@dataclass(frozen=True)
class ContinualRunResult:
    """Everything a finished stream run produced."""

    matrix: PerformanceMatrix
    bank: MemoryBank
    state: ClassifierState


def continual_run(
    stream: TaskStream,
    scheme: TrainScheme,
    budget_ratio: float = 0.01,
    condense_config: CondenseConfig | None = None,
    train_config: TrainConfig | None = None,
) -> ContinualRunResult:
    """Play the whole stream under one scheme and record the accuracy matrix.

    Per task, in order: grow the classifier for the task's classes, update
    the memory (condense or sample under the bank policy, or store the full
    graph for joint), train with the scheme, then evaluate on every task seen
    so far. Banked schemes size each entry by budget_for_task over the
    stream's total training nodes. Row k of the result is the accuracy
    vector after task k.
    """
    if train_config is None:
        train_config = TrainConfig()
    banked = scheme.kind in _BANKED_KINDS
    if banked and scheme.policy == CGM:
        if condense_config is None:
            raise ValueError("cgm schemes need a condense_config")
        if condense_config.encoder.in_dim != stream.feature_dim:
            raise ValueError(
                f"condense encoder in_dim {condense_config.encoder.in_dim} does not match "
                f"stream feature dim {stream.feature_dim}"
            )
    budget = 0
    if banked:
        total_train = sum(int(np.count_nonzero(t.incoming.train_mask)) for t in stream.tasks)
        budget = budget_for_task(total_train, budget_ratio, len(stream.tasks))
    policy = scheme.policy if scheme.policy is not None else CGM
    bank = MemoryBank(entries=(), policy=policy)
    state = ClassifierState.create(stream.feature_dim, train_config.hidden_dim, train_config.seed)
    matrix = PerformanceMatrix()
    seen = 0
    for task in stream.tasks:
        new_classes = max(task.class_set) + 1 - seen
        if new_classes > 0:
            state = grow_output(state, new_classes)
            seen += new_classes
        if scheme.kind == "joint":
            bank = update_memory(bank, SampledGraph(graph=task.incoming, source_task=task.index))
        elif banked:
            if scheme.policy == CGM:
                entry = condense(
                    task.incoming,
                    budget,
                    condense_config,
                    derive_seed(train_config.seed, _CONDENSE_SALT, task.index),
                    source_task=task.index,
                )
            else:
                entry = sample_replayed(
                    task.incoming,
                    budget,
                    scheme.policy,
                    derive_seed(train_config.seed, _SAMPLE_SALT, task.index),
                    source_task=task.index,
                )
            bank = update_memory(bank, entry)
        state = train_task(state, task, bank, scheme, train_config)
        matrix = matrix.with_row(evaluate(state, stream, task.index, train_config.il_mode))
    return ContinualRunResult(matrix=matrix, bank=bank, state=state)
