"""Experiment harness: JSON configs, output bundles, and the command line."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .condense import CondenseConfig, condense
from .dataset_io import load_dataset, save_bank, save_dataset
from .encoders import ACTIVATIONS, ARCHITECTURES, EncoderConfig, gcn_forward, init_random_encoder
from .graph import Graph, build_task_stream, normalize_adjacency, sbm_generate
from .gradcheck import run_gradient_checks
from .memory import BANK_POLICIES, CGM
from .trainer import (
    IL_MODES,
    SCHEME_KINDS,
    ContinualRunResult,
    TrainConfig,
    TrainScheme,
    continual_run,
)
from .seeding import derive_seed

_SBM_SALT = 0x73626d67

DEFAULT_SBM = {
    "blocks": 10,
    "nodes_per_block": 100,
    "p_in": 0.1,
    "p_out": 0.01,
    "feature_dim": 16,
    "feature_separation": 3.0,
}

_BANKED_KINDS = ("tim", "replay_plain", "replay_ergnn", "replay_ssm")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one run; serializes to stable JSON."""

    dataset: dict = field(default_factory=lambda: {"kind": "sbm", **DEFAULT_SBM})
    classes_per_task: int = 2
    split_fractions: tuple | None = (0.6, 0.2, 0.2)
    scheme_kind: str = "tim"
    bank_policy: str | None = CGM
    budget_ratio: float = 0.01
    condense_num_encoders: int = 200
    condense_feature_lr: float = 0.01
    condense_hidden_dim: int = 512
    condense_out_dim: int = 1024
    condense_architecture: str = "gcn"
    condense_activation: str = "relu"
    condense_depth: int = 2
    condense_init_mode: str = "sample"
    epochs: int = 200
    lr: float = 0.01
    hidden_dim: int = 256
    il_mode: str = "class_il"
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        kind = self.dataset.get("kind")
        if kind == "sbm":
            extra = set(self.dataset) - {"kind"} - set(DEFAULT_SBM)
            if extra:
                raise ValueError(f"unknown sbm dataset keys: {sorted(extra)}")
        elif kind == "directory":
            if "path" not in self.dataset:
                raise ValueError("directory dataset needs a 'path'")
        else:
            raise ValueError(f"dataset kind must be 'sbm' or 'directory', got {kind!r}")
        if self.scheme_kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme {self.scheme_kind!r}, expected one of {SCHEME_KINDS}")
        if self.scheme_kind in _BANKED_KINDS:
            if self.bank_policy not in BANK_POLICIES:
                raise ValueError(
                    f"scheme {self.scheme_kind!r} needs a bank policy from {BANK_POLICIES}"
                )
        if self.il_mode not in IL_MODES:
            raise ValueError(f"il_mode must be one of {IL_MODES}")
        if self.split_fractions is not None:
            object.__setattr__(self, "split_fractions", tuple(float(x) for x in self.split_fractions))

    def to_dict(self) -> dict:
        return {
            "dataset": dict(self.dataset),
            "stream": {
                "classes_per_task": self.classes_per_task,
                "split_fractions": list(self.split_fractions) if self.split_fractions is not None else None,
            },
            "scheme": {"kind": self.scheme_kind, "policy": self.bank_policy},
            "budget_ratio": self.budget_ratio,
            "condense": {
                "num_encoders": self.condense_num_encoders,
                "feature_lr": self.condense_feature_lr,
                "hidden_dim": self.condense_hidden_dim,
                "out_dim": self.condense_out_dim,
                "architecture": self.condense_architecture,
                "activation": self.condense_activation,
                "depth": self.condense_depth,
                "init_mode": self.condense_init_mode,
            },
            "trainer": {
                "epochs": self.epochs,
                "lr": self.lr,
                "hidden_dim": self.hidden_dim,
                "il_mode": self.il_mode,
            },
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known_top = {"dataset", "stream", "scheme", "budget_ratio", "condense", "trainer", "seed", "output_dir"}
        extra = set(data) - known_top
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        kwargs: dict = {}
        if "dataset" in data:
            kwargs["dataset"] = dict(data["dataset"])
        stream = data.get("stream", {})
        extra = set(stream) - {"classes_per_task", "split_fractions"}
        if extra:
            raise ValueError(f"unknown stream keys: {sorted(extra)}")
        if "classes_per_task" in stream:
            kwargs["classes_per_task"] = int(stream["classes_per_task"])
        if "split_fractions" in stream:
            sf = stream["split_fractions"]
            kwargs["split_fractions"] = None if sf is None else tuple(sf)
        scheme = data.get("scheme", {})
        extra = set(scheme) - {"kind", "policy"}
        if extra:
            raise ValueError(f"unknown scheme keys: {sorted(extra)}")
        if "kind" in scheme:
            kwargs["scheme_kind"] = scheme["kind"]
        if "policy" in scheme:
            kwargs["bank_policy"] = scheme["policy"]
        elif kwargs.get("scheme_kind") in ("finetune", "joint"):
            kwargs["bank_policy"] = None
        if "budget_ratio" in data:
            kwargs["budget_ratio"] = float(data["budget_ratio"])
        cond = data.get("condense", {})
        cond_keys = {
            "num_encoders", "feature_lr", "hidden_dim", "out_dim",
            "architecture", "activation", "depth", "init_mode",
        }
        extra = set(cond) - cond_keys
        if extra:
            raise ValueError(f"unknown condense keys: {sorted(extra)}")
        for key in cond:
            kwargs[f"condense_{key}"] = cond[key]
        tr = data.get("trainer", {})
        extra = set(tr) - {"epochs", "lr", "hidden_dim", "il_mode"}
        if extra:
            raise ValueError(f"unknown trainer keys: {sorted(extra)}")
        for key in tr:
            kwargs[key] = tr[key]
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        if data.get("output_dir") is not None:
            kwargs["output_dir"] = str(data["output_dir"])
        cfg = cls(**kwargs)
        if cfg.scheme_kind in ("finetune", "joint") and "policy" not in scheme:
            object.__setattr__(cfg, "bank_policy", None)
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_graph(config: ExperimentConfig) -> Graph:
    ds = config.dataset
    if ds["kind"] == "sbm":
        params = {**DEFAULT_SBM, **{k: v for k, v in ds.items() if k != "kind"}}
        return sbm_generate(
            blocks=int(params["blocks"]),
            nodes_per_block=int(params["nodes_per_block"]),
            p_in=float(params["p_in"]),
            p_out=float(params["p_out"]),
            feature_dim=int(params["feature_dim"]),
            feature_separation=float(params["feature_separation"]),
            seed=derive_seed(config.seed, _SBM_SALT),
        )
    return load_dataset(ds["path"])


def build_stream(config: ExperimentConfig):
    g = load_graph(config)
    return build_task_stream(
        g,
        classes_per_task=config.classes_per_task,
        split_fractions=config.split_fractions,
        seed=config.seed,
    )


def make_scheme(config: ExperimentConfig) -> TrainScheme:
    return TrainScheme(kind=config.scheme_kind, policy=config.bank_policy)


def make_condense_config(config: ExperimentConfig, feature_dim: int) -> CondenseConfig:
    encoder = EncoderConfig(
        in_dim=feature_dim,
        hidden_dim=config.condense_hidden_dim,
        out_dim=config.condense_out_dim,
        architecture=config.condense_architecture,
        activation=config.condense_activation,
        depth=config.condense_depth,
    )
    return CondenseConfig(
        encoder=encoder,
        num_encoders=config.condense_num_encoders,
        feature_lr=config.condense_feature_lr,
        init_mode=config.condense_init_mode,
    )


def make_train_config(config: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        epochs=config.epochs,
        lr=config.lr,
        hidden_dim=config.hidden_dim,
        seed=config.seed,
        il_mode=config.il_mode,
    )


def run_experiment(config: ExperimentConfig, out_dir=None) -> ContinualRunResult:
    """Run one configured stream and write the output bundle.

    The output directory (config.output_dir unless overridden here) receives
    config.json (the resolved settings), perf_matrix.csv, metrics.json, and
    bank/ when the scheme stores replayed graphs. Identical configs produce
    byte-identical result files.
    """
    if out_dir is None:
        out_dir = config.output_dir
    if out_dir is None:
        raise ValueError("no output directory: set output_dir in the config or pass one")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream = build_stream(config)
    scheme = make_scheme(config)
    cond_cfg = None
    if scheme.policy == CGM and scheme.kind in _BANKED_KINDS:
        cond_cfg = make_condense_config(config, stream.feature_dim)
    result = continual_run(
        stream,
        scheme,
        budget_ratio=config.budget_ratio,
        condense_config=cond_cfg,
        train_config=make_train_config(config),
    )
    (out / "config.json").write_text(config.to_json(), encoding="utf-8")
    (out / "perf_matrix.csv").write_text(metrics_mod.to_csv(result.matrix), encoding="utf-8")
    report = metrics_mod.metrics_report(result.matrix)
    (out / "metrics.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if result.bank.entries:
        save_bank(result.bank, out / "bank")
    return result


def export_embeddings(g: Graph, encoder: EncoderConfig, seed: int) -> str:
    """Embed a graph under one seeded random encoder.

    Returns one CSV line per node holding the out_dim embedding values, for
    external plotting; same seed, same bytes.
    """
    params = init_random_encoder(encoder, seed)
    emb, _ = gcn_forward(normalize_adjacency(g), g.features, params, encoder)
    lines = [",".join(format(v, ".6g") for v in row) for row in emb]
    return "\n".join(lines) + "\n"


def _parse_fractions(text: str):
    parts = [float(tok) for tok in text.split(",")]
    if len(parts) != 3:
        raise ValueError("split fractions must be three comma-separated numbers")
    return tuple(parts)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cglearn",
        description="Continual node classification with condensed replay memories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="play a task stream under one training scheme")
    p_run.add_argument("--config", help="JSON config file; flags below override it")
    p_run.add_argument("--out", help="output directory (overrides the config's output_dir)")
    p_run.add_argument("--scheme", choices=SCHEME_KINDS)
    p_run.add_argument("--policy", choices=BANK_POLICIES)
    p_run.add_argument("--budget-ratio", type=float)
    p_run.add_argument("--il-mode", choices=IL_MODES)
    p_run.add_argument("--classes-per-task", type=int)
    p_run.add_argument("--split", help="train,val,test fractions or 'keep' to use stored marks")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--epochs", type=int)
    p_run.add_argument("--lr", type=float)
    p_run.add_argument("--hidden-dim", type=int)
    p_run.add_argument("--num-encoders", type=int)
    p_run.add_argument("--condense-lr", type=float)
    p_run.add_argument("--condense-hidden-dim", type=int)
    p_run.add_argument("--condense-out-dim", type=int)
    p_run.add_argument("--init-mode", choices=("sample", "noise"))
    p_run.add_argument("--dataset-dir", help="use a dataset directory instead of the generator")

    p_synth = sub.add_parser("synth", help="generate a block-model dataset directory")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--blocks", type=int, default=DEFAULT_SBM["blocks"])
    p_synth.add_argument("--nodes-per-block", type=int, default=DEFAULT_SBM["nodes_per_block"])
    p_synth.add_argument("--p-in", type=float, default=DEFAULT_SBM["p_in"])
    p_synth.add_argument("--p-out", type=float, default=DEFAULT_SBM["p_out"])
    p_synth.add_argument("--feature-dim", type=int, default=DEFAULT_SBM["feature_dim"])
    p_synth.add_argument("--separation", type=float, default=DEFAULT_SBM["feature_separation"])
    p_synth.add_argument("--split", default="0.6,0.2,0.2")
    p_synth.add_argument("--seed", type=int, default=0)

    p_cond = sub.add_parser("condense", help="condense one dataset into a replay graph")
    p_cond.add_argument("--dataset-dir", required=True)
    p_cond.add_argument("--out", required=True, help="bank directory to write")
    p_cond.add_argument("--budget", type=int, required=True)
    p_cond.add_argument("--num-encoders", type=int, default=200)
    p_cond.add_argument("--condense-lr", type=float, default=0.01)
    p_cond.add_argument("--hidden-dim", type=int, default=512)
    p_cond.add_argument("--out-dim", type=int, default=1024)
    p_cond.add_argument("--architecture", choices=ARCHITECTURES, default="gcn")
    p_cond.add_argument("--activation", choices=ACTIVATIONS, default="relu")
    p_cond.add_argument("--init-mode", choices=("sample", "noise"), default="sample")
    p_cond.add_argument("--seed", type=int, default=0)

    p_metrics = sub.add_parser("metrics", help="recompute metrics from a saved matrix")
    p_metrics.add_argument("--matrix", required=True, help="perf_matrix.csv path")
    p_metrics.add_argument("--out", help="write the JSON report here instead of stdout")

    p_embed = sub.add_parser("embed", help="export random-encoder embeddings as CSV")
    p_embed.add_argument("--dataset-dir", required=True)
    p_embed.add_argument("--out", required=True)
    p_embed.add_argument("--hidden-dim", type=int, default=512)
    p_embed.add_argument("--out-dim", type=int, default=1024)
    p_embed.add_argument("--architecture", choices=ARCHITECTURES, default="gcn")
    p_embed.add_argument("--activation", choices=ACTIVATIONS, default="relu")
    p_embed.add_argument("--seed", type=int, default=0)

    p_grad = sub.add_parser("gradcheck", help="finite-difference checks of every gradient")
    p_grad.add_argument("--seeds", type=int, default=20)

    return parser


def _config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = ExperimentConfig.from_dict(data)
    updates: dict = {}
    if args.dataset_dir:
        updates["dataset"] = {"kind": "directory", "path": args.dataset_dir}
    stream_updates = {}
    if args.classes_per_task is not None:
        stream_updates["classes_per_task"] = args.classes_per_task
    if args.split is not None:
        stream_updates["split_fractions"] = None if args.split == "keep" else _parse_fractions(args.split)
    scheme_updates = {}
    if args.scheme is not None:
        scheme_updates["kind"] = args.scheme
    if args.policy is not None:
        scheme_updates["policy"] = args.policy
    merged = cfg.to_dict()
    merged["stream"].update(stream_updates)
    if scheme_updates:
        merged["scheme"].update(scheme_updates)
        if "policy" not in scheme_updates:
            kind = merged["scheme"]["kind"]
            merged["scheme"]["policy"] = CGM if kind in _BANKED_KINDS else None
    if updates:
        merged["dataset"] = updates["dataset"]
    if args.budget_ratio is not None:
        merged["budget_ratio"] = args.budget_ratio
    if args.il_mode is not None:
        merged["trainer"]["il_mode"] = args.il_mode
    if args.epochs is not None:
        merged["trainer"]["epochs"] = args.epochs
    if args.lr is not None:
        merged["trainer"]["lr"] = args.lr
    if args.hidden_dim is not None:
        merged["trainer"]["hidden_dim"] = args.hidden_dim
    if args.num_encoders is not None:
        merged["condense"]["num_encoders"] = args.num_encoders
    if args.condense_lr is not None:
        merged["condense"]["feature_lr"] = args.condense_lr
    if args.condense_hidden_dim is not None:
        merged["condense"]["hidden_dim"] = args.condense_hidden_dim
    if args.condense_out_dim is not None:
        merged["condense"]["out_dim"] = args.condense_out_dim
    if args.init_mode is not None:
        merged["condense"]["init_mode"] = args.init_mode
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.out is not None:
        merged["output_dir"] = args.out
    return ExperimentConfig.from_dict(merged)


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    result = run_experiment(config)
    report = metrics_mod.metrics_report(result.matrix)
    k = result.matrix.num_tasks
    final_bwt = report["bwt"][-1]
    print(f"tasks:   {k}")
    print(f"ap:      {report['ap'][-1]:.6g}")
    print(f"ap_mean: {report['ap_mean'][-1]:.6g}")
    print(f"bwt:     {'n/a' if final_bwt is None else format(final_bwt, '.6g')}")
    print(f"wrote {Path(config.output_dir).resolve()}")
    return 0


def _cmd_synth(args) -> int:
    from .graph import assign_splits

    g = sbm_generate(
        blocks=args.blocks,
        nodes_per_block=args.nodes_per_block,
        p_in=args.p_in,
        p_out=args.p_out,
        feature_dim=args.feature_dim,
        feature_separation=args.separation,
        seed=derive_seed(args.seed, _SBM_SALT),
    )
    if args.split != "keep":
        g = assign_splits(g, _parse_fractions(args.split), seed=args.seed)
    save_dataset(g, args.out)
    print(f"wrote {Path(args.out).resolve()} ({g.num_nodes} nodes, {g.num_edges} edges)")
    return 0


def _cmd_condense(args) -> int:
    from .memory import MemoryBank

    g = load_dataset(args.dataset_dir)
    encoder = EncoderConfig(
        in_dim=g.num_features,
        hidden_dim=args.hidden_dim,
        out_dim=args.out_dim,
        architecture=args.architecture,
        activation=args.activation,
    )
    cfg = CondenseConfig(
        encoder=encoder,
        num_encoders=args.num_encoders,
        feature_lr=args.condense_lr,
        init_mode=args.init_mode,
    )
    cond = condense(g, args.budget, cfg, args.seed, source_task=1)
    bank = MemoryBank(entries=(cond,), policy=CGM)
    save_bank(bank, args.out)
    print(f"wrote {Path(args.out).resolve()} ({cond.num_nodes} synthetic nodes)")
    return 0


def _cmd_metrics(args) -> int:
    matrix = metrics_mod.from_csv(Path(args.matrix).read_text(encoding="utf-8"))
    text = json.dumps(metrics_mod.metrics_report(matrix), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {Path(args.out).resolve()}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_embed(args) -> int:
    g = load_dataset(args.dataset_dir)
    encoder = EncoderConfig(
        in_dim=g.num_features,
        hidden_dim=args.hidden_dim,
        out_dim=args.out_dim,
        architecture=args.architecture,
        activation=args.activation,
    )
    text = export_embeddings(g, encoder, args.seed)
    Path(args.out).write_text(text, encoding="utf-8")
    print(f"wrote {Path(args.out).resolve()}")
    return 0


def _cmd_gradcheck(args) -> int:
    records = run_gradient_checks(num_seeds=args.seeds)
    failed = False
    for name, err, tol, ok in records:
        status = "PASS" if ok else "FAIL"
        print(f"{name}: max rel err {err:.3e} (tol {tol:g}) {status}")
        failed = failed or not ok
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "synth": _cmd_synth,
        "condense": _cmd_condense,
        "metrics": _cmd_metrics,
        "embed": _cmd_embed,
        "gradcheck": _cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except Exception as err:  # one line on stderr, nonzero exit
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
