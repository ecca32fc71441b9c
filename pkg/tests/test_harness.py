"""Experiment configs, output bundles, and the command line."""

import json

import numpy as np
import pytest

from cglearn.cli import DEFAULT_SBM, ExperimentConfig, export_embeddings, main, run_experiment
from cglearn.condense import CondensedGraph
from cglearn.dataset_io import load_bank, load_dataset
from cglearn.encoders import EncoderConfig
from cglearn.metrics import from_csv

from conftest import make_graph


def _small_config(**overrides):
    base = dict(
        dataset={"kind": "sbm", "blocks": 4, "nodes_per_block": 20, "p_in": 0.1,
                 "p_out": 0.01, "feature_dim": 4, "feature_separation": 3.0},
        classes_per_task=2,
        scheme_kind="tim",
        bank_policy="cgm",
        budget_ratio=0.1,
        condense_num_encoders=4,
        condense_hidden_dim=16,
        condense_out_dim=16,
        epochs=5,
        hidden_dim=8,
        seed=0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.dataset == {"kind": "sbm", **DEFAULT_SBM}
    assert cfg.scheme_kind == "tim" and cfg.bank_policy == "cgm"
    assert cfg.budget_ratio == 0.01
    assert cfg.condense_num_encoders == 200
    assert cfg.condense_hidden_dim == 512 and cfg.condense_out_dim == 1024
    assert cfg.epochs == 200 and cfg.lr == 0.01 and cfg.hidden_dim == 256
    assert cfg.il_mode == "class_il" and cfg.seed == 0
    assert cfg.output_dir is None


def test_config_round_trip():
    for cfg in (
        ExperimentConfig(),
        _small_config(),
        ExperimentConfig(scheme_kind="finetune", bank_policy=None, output_dir="out", seed=7),
        ExperimentConfig(split_fractions=None, il_mode="task_il"),
    ):
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
        assert ExperimentConfig.from_dict(json.loads(cfg.to_json())) == cfg


def test_config_from_dict_partial_and_policy_defaulting():
    cfg = ExperimentConfig.from_dict({"scheme": {"kind": "finetune"}})
    assert cfg.scheme_kind == "finetune" and cfg.bank_policy is None
    cfg = ExperimentConfig.from_dict({"scheme": {"kind": "joint"}})
    assert cfg.bank_policy is None
    cfg = ExperimentConfig.from_dict({"scheme": {"kind": "replay_ssm", "policy": "random_sample"}})
    assert cfg.bank_policy == "random_sample"
    cfg = ExperimentConfig.from_dict({"trainer": {"epochs": 3}, "seed": 4})
    assert cfg.epochs == 3 and cfg.seed == 4 and cfg.scheme_kind == "tim"


def test_config_unknown_key_errors():
    with pytest.raises(ValueError, match="unknown config keys: \\['optimizer'\\]"):
        ExperimentConfig.from_dict({"optimizer": {}})
    with pytest.raises(ValueError, match="unknown stream keys"):
        ExperimentConfig.from_dict({"stream": {"tasks": 5}})
    with pytest.raises(ValueError, match="unknown scheme keys"):
        ExperimentConfig.from_dict({"scheme": {"kind": "tim", "alpha": 1}})
    with pytest.raises(ValueError, match="unknown condense keys"):
        ExperimentConfig.from_dict({"condense": {"steps": 10}})
    with pytest.raises(ValueError, match="unknown trainer keys"):
        ExperimentConfig.from_dict({"trainer": {"momentum": 0.9}})


def test_config_validation_errors():
    with pytest.raises(ValueError, match="dataset kind must be 'sbm' or 'directory'"):
        ExperimentConfig(dataset={"kind": "csv"})
    with pytest.raises(ValueError, match="needs a 'path'"):
        ExperimentConfig(dataset={"kind": "directory"})
    with pytest.raises(ValueError, match="unknown sbm dataset keys"):
        ExperimentConfig(dataset={"kind": "sbm", "temperature": 1.0})
    with pytest.raises(ValueError, match="unknown scheme"):
        ExperimentConfig(scheme_kind="gem")
    with pytest.raises(ValueError, match="needs a bank policy"):
        ExperimentConfig(scheme_kind="tim", bank_policy=None)
    with pytest.raises(ValueError, match="il_mode"):
        ExperimentConfig(il_mode="open_world")


def test_run_experiment_writes_bundle(tmp_path):
    cfg = _small_config(output_dir=str(tmp_path / "out"))
    result = run_experiment(cfg)
    out = tmp_path / "out"
    assert json.loads((out / "config.json").read_text()) == cfg.to_dict()
    matrix = from_csv((out / "perf_matrix.csv").read_text())
    assert matrix.num_tasks == 2
    assert matrix.rows == result.matrix.rows
    report = json.loads((out / "metrics.json").read_text())
    assert sorted(report) == ["ap", "ap_mean", "bwt"]
    assert report["bwt"][0] is None
    bank = load_bank(out / "bank")
    assert len(bank.entries) == 2
    assert all(isinstance(e, CondensedGraph) for e in bank.entries)


def test_run_experiment_out_dir_handling(tmp_path):
    cfg = _small_config()
    with pytest.raises(ValueError, match="no output directory"):
        run_experiment(cfg)
    run_experiment(cfg, out_dir=tmp_path / "explicit")
    assert (tmp_path / "explicit" / "perf_matrix.csv").is_file()


def test_run_experiment_finetune_writes_no_bank(tmp_path):
    cfg = _small_config(scheme_kind="finetune", bank_policy=None, output_dir=str(tmp_path / "out"))
    run_experiment(cfg)
    assert not (tmp_path / "out" / "bank").exists()


def test_run_experiment_deterministic_bytes(tmp_path):
    cfg = _small_config()
    run_experiment(cfg, out_dir=tmp_path / "a")
    run_experiment(cfg, out_dir=tmp_path / "b")
    for name in ("perf_matrix.csv", "metrics.json", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_export_embeddings_shape():
    g = make_graph([(0, 1), (1, 2)], [0, 0, 1], feature_dim=3)
    enc = EncoderConfig(in_dim=3, hidden_dim=4, out_dim=5)
    text = export_embeddings(g, enc, seed=2)
    lines = text.strip().split("\n")
    assert len(lines) == 3
    assert all(len(line.split(",")) == 5 for line in lines)
    assert export_embeddings(g, enc, seed=2) == text
    assert export_embeddings(g, enc, seed=3) != text


def test_cli_synth_run(tmp_path, capsys):
    ds = str(tmp_path / "ds")
    assert main(["synth", "--out", ds, "--blocks", "4", "--nodes-per-block", "10",
                 "--feature-dim", "4", "--p-in", "0.3", "--seed", "3"]) == 0
    assert "wrote" in capsys.readouterr().out
    g = load_dataset(ds)
    assert g.num_nodes == 40

    out = str(tmp_path / "run")
    rc = main(["run", "--dataset-dir", ds, "--out", out, "--scheme", "tim",
               "--policy", "random_sample", "--budget-ratio", "0.2",
               "--epochs", "3", "--hidden-dim", "8", "--seed", "1"])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "ap:" in printed and "bwt:" in printed
    cfg_back = json.loads((tmp_path / "run" / "config.json").read_text())
    assert cfg_back["scheme"] == {"kind": "tim", "policy": "random_sample"}
    assert cfg_back["dataset"] == {"kind": "directory", "path": ds}
    assert from_csv((tmp_path / "run" / "perf_matrix.csv").read_text()).num_tasks == 2


def test_cli_run_scheme_flag_resets_policy(tmp_path, capsys):
    ds = str(tmp_path / "ds")
    main(["synth", "--out", ds, "--blocks", "4", "--nodes-per-block", "10",
          "--feature-dim", "4", "--p-in", "0.3", "--seed", "3"])
    out = str(tmp_path / "run")
    assert main(["run", "--dataset-dir", ds, "--out", out, "--scheme", "finetune",
                 "--epochs", "2", "--hidden-dim", "8"]) == 0
    capsys.readouterr()
    cfg_back = json.loads((tmp_path / "run" / "config.json").read_text())
    assert cfg_back["scheme"] == {"kind": "finetune", "policy": None}
    assert not (tmp_path / "run" / "bank").exists()


def test_cli_run_with_config_file(tmp_path, capsys):
    cfg = _small_config()
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(cfg.to_json(), encoding="utf-8")
    out = str(tmp_path / "out")
    assert main(["run", "--config", str(cfg_path), "--out", out, "--epochs", "2"]) == 0
    capsys.readouterr()
    back = json.loads((tmp_path / "out" / "config.json").read_text())
    assert back["trainer"]["epochs"] == 2
    assert back["condense"]["num_encoders"] == 4


def test_cli_condense_and_embed(tmp_path, capsys):
    ds = str(tmp_path / "ds")
    main(["synth", "--out", ds, "--blocks", "2", "--nodes-per-block", "10",
          "--feature-dim", "4", "--p-in", "0.3", "--seed", "5"])
    bank_dir = str(tmp_path / "bank")
    assert main(["condense", "--dataset-dir", ds, "--out", bank_dir, "--budget", "4",
                 "--num-encoders", "2", "--hidden-dim", "8", "--out-dim", "8"]) == 0
    assert "synthetic nodes" in capsys.readouterr().out
    bank = load_bank(bank_dir)
    assert len(bank.entries) == 1
    assert bank.entries[0].num_nodes == 4

    emb = tmp_path / "emb.csv"
    assert main(["embed", "--dataset-dir", ds, "--out", str(emb),
                 "--hidden-dim", "8", "--out-dim", "8", "--seed", "2"]) == 0
    capsys.readouterr()
    lines = emb.read_text().strip().split("\n")
    assert len(lines) == 20
    assert all(len(line.split(",")) == 8 for line in lines)


def test_cli_metrics(tmp_path, capsys):
    matrix_path = tmp_path / "perf.csv"
    matrix_path.write_text("1\n0.5,1\n", encoding="utf-8")
    assert main(["metrics", "--matrix", str(matrix_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ap"] == [1.0, 0.75]
    assert report["bwt"] == [None, -0.5]
    out = tmp_path / "report.json"
    assert main(["metrics", "--matrix", str(matrix_path), "--out", str(out)]) == 0
    capsys.readouterr()
    assert json.loads(out.read_text())["ap_mean"] == [1.0, 0.875]


def test_cli_gradcheck_small(capsys):
    assert main(["gradcheck", "--seeds", "2"]) == 0
    printed = capsys.readouterr().out
    assert "PASS" in printed and "FAIL" not in printed


def test_cli_error_paths(tmp_path, capsys):
    assert main(["metrics", "--matrix", str(tmp_path / "missing.csv")]) == 1
    assert capsys.readouterr().err.startswith("error:")
    assert main(["run", "--dataset-dir", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("error:")
    with pytest.raises(SystemExit):
        main(["unknown-command"])
