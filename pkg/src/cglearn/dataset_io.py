"""Disk formats: dataset directories and saved memory banks.

A dataset directory holds:
    nodes.tsv     node_id <TAB> label <TAB> split   (ids contiguous from 0)
    edges.tsv     u <TAB> v, one undirected edge per line, no duplicates
    features.bin  magic 'GFEA', u32 node count, u32 feature dim,
                  then float32 rows (little endian)
    features.csv  alternative to features.bin, one comma-separated row per node

A saved bank directory holds manifest.json plus one subdirectory per entry.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from scipy import sparse

from .condense import CondensedGraph
from .graph import SPLIT_MARKS, SPLIT_NAMES, Graph
from .memory import MemoryBank, SampledGraph

FEATURE_MAGIC = b"GFEA"


def _parse_nodes(path: Path):
    labels, splits = [], []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path.name}:{line_no}: expected 3 tab-separated fields, got {len(parts)}")
            try:
                node_id = int(parts[0])
                label = int(parts[1])
            except ValueError:
                raise ValueError(f"{path.name}:{line_no}: node id and label must be integers") from None
            if node_id != len(labels):
                raise ValueError(
                    f"{path.name}:{line_no}: node ids must be contiguous from 0, got {node_id}"
                )
            if label < 0:
                raise ValueError(f"{path.name}:{line_no}: label must be nonnegative, got {label}")
            split_name = parts[2].strip()
            if split_name not in SPLIT_MARKS:
                raise ValueError(
                    f"{path.name}:{line_no}: split must be one of {sorted(SPLIT_MARKS)}, got {split_name!r}"
                )
            labels.append(label)
            splits.append(SPLIT_MARKS[split_name])
    if not labels:
        raise ValueError(f"{path.name}: no nodes found")
    return np.asarray(labels, dtype=np.int64), np.asarray(splits, dtype=np.int8)


def _parse_edges(path: Path, n: int) -> sparse.csr_array:
    us, vs = [], []
    seen = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path.name}:{line_no}: expected 2 tab-separated fields, got {len(parts)}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path.name}:{line_no}: endpoints must be integers") from None
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"{path.name}:{line_no}: endpoint outside [0, {n})")
            if u == v:
                raise ValueError(f"{path.name}:{line_no}: self-loop on node {u}")
            key = (u, v) if u < v else (v, u)
            if key in seen:
                raise ValueError(f"{path.name}:{line_no}: duplicate edge {u}-{v}")
            seen.add(key)
            us.append(u)
            vs.append(v)
    row = np.asarray(us + vs, dtype=np.int64)
    col = np.asarray(vs + us, dtype=np.int64)
    return sparse.csr_array(
        (np.ones(row.size, dtype=np.float64), (row, col)), shape=(n, n)
    )


def _read_features_bin(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != FEATURE_MAGIC:
        raise ValueError(f"{path.name}: bad header, expected magic {FEATURE_MAGIC!r}")
    n, d = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * n * d
    if len(blob) != expected:
        raise ValueError(f"{path.name}: expected {expected} bytes for {n}x{d} float32, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=12)
    return data.reshape(n, d).astype(np.float64)


def _read_features_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise ValueError(f"{path.name}:{line_no}: non-numeric feature value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"{path.name}:{line_no}: expected {width} values, got {len(row)}")
            rows.append(row)
    if not rows:
        raise ValueError(f"{path.name}: no feature rows found")
    return np.asarray(rows, dtype=np.float64)


def load_dataset(path) -> Graph:
    """Read a dataset directory into a Graph; errors carry file and line."""
    root = Path(path)
    if not root.is_dir():
        raise ValueError(f"dataset path {root} is not a directory")
    nodes_path = root / "nodes.tsv"
    edges_path = root / "edges.tsv"
    if not nodes_path.is_file():
        raise ValueError(f"missing {nodes_path}")
    if not edges_path.is_file():
        raise ValueError(f"missing {edges_path}")
    labels, split = _parse_nodes(nodes_path)
    n = labels.size
    adjacency = _parse_edges(edges_path, n)
    bin_path = root / "features.bin"
    csv_path = root / "features.csv"
    if bin_path.is_file():
        features = _read_features_bin(bin_path)
    elif csv_path.is_file():
        features = _read_features_csv(csv_path)
    else:
        raise ValueError(f"missing features.bin or features.csv in {root}")
    if features.shape[0] != n:
        raise ValueError(
            f"feature rows ({features.shape[0]}) do not match node count ({n})"
        )
    return Graph(adjacency=adjacency, features=features, labels=labels, split=split)


def save_dataset(g: Graph, path, feature_format: str = "bin"):
    """Write a Graph as a dataset directory (floats stored as float32)."""
    if feature_format not in ("bin", "csv"):
        raise ValueError(f"feature_format must be 'bin' or 'csv', got {feature_format!r}")
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with (root / "nodes.tsv").open("w", encoding="utf-8") as fh:
        for i in range(g.num_nodes):
            fh.write(f"{i}\t{int(g.labels[i])}\t{SPLIT_NAMES[int(g.split[i])]}\n")
    coo = g.adjacency.tocoo()
    with (root / "edges.tsv").open("w", encoding="utf-8") as fh:
        for u, v in zip(coo.row, coo.col):
            if u < v:
                fh.write(f"{u}\t{v}\n")
    if feature_format == "bin":
        n, d = g.features.shape
        with (root / "features.bin").open("wb") as fh:
            fh.write(FEATURE_MAGIC)
            fh.write(struct.pack("<II", n, d))
            fh.write(np.ascontiguousarray(g.features, dtype="<f4").tobytes())
    else:
        with (root / "features.csv").open("w", encoding="utf-8") as fh:
            for row in g.features:
                fh.write(",".join(format(v, ".9g") for v in row) + "\n")


def _entry_dir(root: Path, i: int) -> Path:
    return root / f"task_{i:03d}"


def save_bank(bank: MemoryBank, path):
    """Persist a bank: one dataset directory per task plus manifest.json.

    Condensed entries are edgeless graphs, so their edges.tsv is empty and
    the self-loop-only adjacency is reconstructed on load. Features round
    through float32 like any dataset directory.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"policy": bank.policy, "entries": []}
    for i, entry in enumerate(bank.entries, start=1):
        sub = _entry_dir(root, i)
        if isinstance(entry, CondensedGraph):
            kind = "condensed"
            save_dataset(entry.to_graph(), sub, feature_format="bin")
        elif isinstance(entry, SampledGraph):
            kind = "sampled"
            save_dataset(entry.graph, sub, feature_format="bin")
        else:
            raise ValueError(f"cannot persist bank entry of type {type(entry).__name__}")
        manifest["entries"].append({"task": i, "kind": kind, "budget": int(entry.num_nodes)})
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_bank(path) -> MemoryBank:
    """Reload a bank saved by save_bank."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ValueError(f"missing {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    entries = []
    for i, meta in enumerate(manifest["entries"], start=1):
        sub = _entry_dir(root, int(meta.get("task", i)))
        g = load_dataset(sub)
        if meta["kind"] == "condensed":
            entries.append(
                CondensedGraph(
                    features=g.features,
                    labels=g.labels,
                    adjacency=sparse.eye_array(g.num_nodes, format="csr", dtype=np.float64),
                    source_task=i,
                )
            )
        elif meta["kind"] == "sampled":
            entries.append(SampledGraph(graph=g, source_task=i))
        else:
            raise ValueError(f"unknown bank entry kind {meta['kind']!r}")
    return MemoryBank(entries=tuple(entries), policy=manifest.get("policy", "cgm"))
