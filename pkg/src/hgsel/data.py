"""On-disk dataset format: a directory with graph.json, edges/*.tsv,
features.tsv, and optional labels.tsv.

graph.json declares node types with counts, relations with endpoint
types, the target type, and metapaths as relation-name chains. Each
relation's edges live in edges/<relation>.tsv as zero-based
``src<TAB>dst`` lines (a repeated line is a parallel edge). features.tsv
has one tab-separated row per target node; labels.tsv maps node id to
class. Loading validates referential integrity and reports the offending
file and line.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataFormatError
from .hetgraph import HeteroGraph, MetapathSpec, RelationMatrix

GRAPH_FILE = "graph.json"
FEATURES_FILE = "features.tsv"
LABELS_FILE = "labels.tsv"
EDGES_DIR = "edges"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DataFormatError(message)


def load_dataset(directory) -> tuple[HeteroGraph, list[MetapathSpec]]:
    """Load and fully validate a dataset directory."""
    root = Path(directory)
    graph_path = root / GRAPH_FILE
    _require(graph_path.is_file(), f"{graph_path}: missing file")
    try:
        meta = json.loads(graph_path.read_text())
    except json.JSONDecodeError as err:
        raise DataFormatError(f"{graph_path}: invalid JSON ({err})") from err

    for key in ("target_type", "node_types", "relations", "metapaths"):
        _require(key in meta, f"{graph_path}: missing key {key!r}")
    counts = {}
    for entry in meta["node_types"]:
        _require("name" in entry and "count" in entry,
                 f"{graph_path}: node type entries need 'name' and 'count'")
        counts[entry["name"]] = int(entry["count"])

    relations = []
    for entry in meta["relations"]:
        for key in ("name", "src", "dst"):
            _require(key in entry, f"{graph_path}: relation entries need {key!r}")
        name, src, dst = entry["name"], entry["src"], entry["dst"]
        _require(src in counts, f"{graph_path}: relation {name!r} has unknown src {src!r}")
        _require(dst in counts, f"{graph_path}: relation {name!r} has unknown dst {dst!r}")
        edge_path = root / EDGES_DIR / f"{name}.tsv"
        _require(edge_path.is_file(), f"{edge_path}: missing file")
        rows, cols = _read_edges(edge_path, counts[src], counts[dst])
        entries = sp.csr_array(
            (np.ones(rows.shape[0], dtype=np.int64), (rows, cols)),
            shape=(counts[src], counts[dst]))
        relations.append(RelationMatrix(name, src, dst, entries))

    target = meta["target_type"]
    _require(target in counts, f"{graph_path}: unknown target type {target!r}")

    features_path = root / FEATURES_FILE
    _require(features_path.is_file(), f"{features_path}: missing file")
    features = _read_features(features_path)
    _require(features.shape[0] == counts[target],
             f"{features_path}: {features.shape[0]} rows, expected {counts[target]}")

    labels = None
    labels_path = root / LABELS_FILE
    if labels_path.is_file():
        labels = _read_labels(labels_path, counts[target])

    graph = HeteroGraph(
        node_types=tuple(counts.items()),
        relations=tuple(relations),
        target_type=target,
        features=features,
        labels=labels,
    )

    specs = []
    for entry in meta["metapaths"]:
        _require("name" in entry and "chain" in entry,
                 f"{graph_path}: metapath entries need 'name' and 'chain'")
        chain = tuple((step["relation"], bool(step.get("reverse", False)))
                      for step in entry["chain"])
        spec = MetapathSpec(entry["name"], chain)
        spec.validate(graph)
        specs.append(spec)
    return graph, specs


def _read_edges(path: Path, n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            _require(len(parts) == 2, f"{path} line {lineno}: expected 'src<TAB>dst'")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataFormatError(f"{path} line {lineno}: non-integer node id") from None
            _require(0 <= src < n_src,
                     f"{path} line {lineno}: src id {src} out of range [0, {n_src})")
            _require(0 <= dst < n_dst,
                     f"{path} line {lineno}: dst id {dst} out of range [0, {n_dst})")
            rows.append(src)
            cols.append(dst)
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)


def _read_features(path: Path) -> np.ndarray:
    rows = []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                values = [float(v) for v in line.split("\t")]
            except ValueError:
                raise DataFormatError(f"{path} line {lineno}: non-numeric value") from None
            if width is None:
                width = len(values)
            _require(len(values) == width,
                     f"{path} line {lineno}: {len(values)} columns, expected {width}")
            rows.append(values)
    _require(bool(rows), f"{path}: no feature rows")
    return np.asarray(rows, dtype=np.float64)


def _read_labels(path: Path, n_targets: int) -> np.ndarray:
    labels = np.full(n_targets, -1, dtype=np.int64)
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            _require(len(parts) == 2, f"{path} line {lineno}: expected 'id<TAB>label'")
            try:
                node, label = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataFormatError(f"{path} line {lineno}: non-integer value") from None
            _require(0 <= node < n_targets,
                     f"{path} line {lineno}: node id {node} out of range [0, {n_targets})")
            _require(label >= 0, f"{path} line {lineno}: negative label")
            labels[node] = label
    _require(bool((labels >= 0).all()),
             f"{path}: not every target node has a label")
    return labels


def save_dataset(graph: HeteroGraph, specs: Sequence[MetapathSpec], directory) -> Path:
    """Write a graph (and its metapaths) in the on-disk format."""
    root = Path(directory)
    (root / EDGES_DIR).mkdir(parents=True, exist_ok=True)
    meta = {
        "target_type": graph.target_type,
        "node_types": [{"name": n, "count": c} for n, c in graph.node_types],
        "relations": [{"name": r.name, "src": r.src_type, "dst": r.dst_type}
                      for r in graph.relations],
        "metapaths": [{"name": s.name,
                       "chain": [{"relation": rel, "reverse": rev}
                                 for rel, rev in s.chain]}
                      for s in specs],
    }
    (root / GRAPH_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for rel in graph.relations:
        coo = rel.entries.tocoo()
        lines = []
        for r, c, v in zip(coo.row, coo.col, coo.data):
            lines.extend([f"{r}\t{c}"] * int(v))
        (root / EDGES_DIR / f"{rel.name}.tsv").write_text(
            "\n".join(lines) + ("\n" if lines else ""))
    np.savetxt(root / FEATURES_FILE, graph.features, delimiter="\t", fmt="%.10g")
    if graph.labels is not None:
        lines = [f"{i}\t{int(label)}" for i, label in enumerate(graph.labels)]
        (root / LABELS_FILE).write_text("\n".join(lines) + "\n")
    return root
