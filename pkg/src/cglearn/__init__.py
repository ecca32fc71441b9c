"""Continual node classification on graph task streams with condensed replay."""

from .condense import (
    CondenseConfig,
    CondensedGraph,
    condense,
    init_condensed,
    mmd_grad,
    mmd_loss,
)
from .encoders import (
    EncoderConfig,
    ForwardCache,
    GcnParams,
    gcn_backward,
    gcn_forward,
    init_random_encoder,
    softmax_cross_entropy,
    weighted_cross_entropy,
)
from .graph import (
    Graph,
    NormalizedAdjacency,
    Task,
    TaskStream,
    assign_splits,
    build_task_stream,
    disjoint_union,
    induced_subgraph,
    largest_remainder,
    normalize_adjacency,
    sbm_generate,
)
from .memory import (
    BANK_POLICIES,
    BankPolicy,
    MemoryBank,
    SampledGraph,
    budget_for_task,
    merge_bank,
    sample_replayed,
    update_memory,
)
from .dataset_io import load_bank, load_dataset, save_bank, save_dataset
from .metrics import PerformanceMatrix, ap, ap_mean, bwt, from_csv, metrics_report, to_csv
from .trainer import (
    ClassifierState,
    ContinualRunResult,
    TrainConfig,
    TrainScheme,
    continual_run,
    evaluate,
    grow_output,
    train_task,
    weighted_replay_loss,
)

__all__ = [
    "BANK_POLICIES",
    "BankPolicy",
    "ClassifierState",
    "CondenseConfig",
    "CondensedGraph",
    "ContinualRunResult",
    "EncoderConfig",
    "ForwardCache",
    "GcnParams",
    "Graph",
    "MemoryBank",
    "NormalizedAdjacency",
    "PerformanceMatrix",
    "SampledGraph",
    "Task",
    "TaskStream",
    "TrainConfig",
    "TrainScheme",
    "ap",
    "ap_mean",
    "assign_splits",
    "budget_for_task",
    "build_task_stream",
    "bwt",
    "condense",
    "continual_run",
    "disjoint_union",
    "evaluate",
    "from_csv",
    "gcn_backward",
    "gcn_forward",
    "grow_output",
    "induced_subgraph",
    "init_condensed",
    "init_random_encoder",
    "largest_remainder",
    "load_bank",
    "load_dataset",
    "merge_bank",
    "save_bank",
    "save_dataset",
    "metrics_report",
    "mmd_grad",
    "mmd_loss",
    "normalize_adjacency",
    "sample_replayed",
    "sbm_generate",
    "softmax_cross_entropy",
    "to_csv",
    "train_task",
    "update_memory",
    "weighted_cross_entropy",
    "weighted_replay_loss",
]

__version__ = "0.1.0"
