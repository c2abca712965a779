"""Heterogeneous graph data model, metapath composition, and homophily analytics.

A heterogeneous graph is stored as a node-type registry plus one sparse
biadjacency matrix per relation. Closed metapaths (same endpoint type)
induce homogeneous subgraphs over the target type whose integer entries
count the distinct path instances joining two nodes (their connection
strength). All types are immutable after construction and all operations
are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EdgelessGraphError, ValidationError


def _as_int_csr(mat) -> sp.csr_array:
    """Coerce to canonical CSR: int64, sorted indices, no explicit zeros."""
    out = sp.csr_array(mat, dtype=np.int64)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


@dataclass(frozen=True)
class RelationMatrix:
    """One typed relation: a sparse nonnegative-integer biadjacency matrix.

    Entries count parallel edges between a source and a destination node
    (normally 0/1). Explicit zeros are never stored.
    """

    name: str
    src_type: str
    dst_type: str
    entries: sp.csr_array

    def __post_init__(self):
        object.__setattr__(self, "entries", _as_int_csr(self.entries))
        if self.entries.nnz and self.entries.data.min() < 0:
            raise ValidationError(f"relation {self.name!r} has negative entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def nnz(self) -> int:
        return self.entries.nnz


@dataclass(frozen=True)
class HeteroGraph:
    """Node-type registry, per-relation matrices, target features and labels."""

    node_types: tuple[tuple[str, int], ...]
    relations: tuple[RelationMatrix, ...]
    target_type: str
    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "node_types", tuple((str(n), int(c)) for n, c in self.node_types))
        object.__setattr__(self, "relations", tuple(self.relations))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValidationError("features must be a 2-D matrix")
        object.__setattr__(self, "features", feats)

        counts = dict(self.node_types)
        if len(counts) != len(self.node_types):
            raise ValidationError("duplicate node type names")
        if self.target_type not in counts:
            raise ValidationError(f"target type {self.target_type!r} not declared")
        if len(self.node_types) < 2 and len(self.relations) < 2:
            raise ValidationError("graph is not heterogeneous: needs >=2 node types or >=2 relations")

        names = set()
        for rel in self.relations:
            if rel.name in names:
                raise ValidationError(f"duplicate relation name {rel.name!r}")
            names.add(rel.name)
            for t in (rel.src_type, rel.dst_type):
                if t not in counts:
                    raise ValidationError(f"relation {rel.name!r} references unknown type {t!r}")
            expected = (counts[rel.src_type], counts[rel.dst_type])
            if rel.shape != expected:
                raise ValidationError(
                    f"relation {rel.name!r} has shape {rel.shape}, expected {expected}"
                )

        if feats.shape[0] != counts[self.target_type]:
            raise ValidationError(
                f"feature rows ({feats.shape[0]}) != target node count ({counts[self.target_type]})"
            )
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (counts[self.target_type],):
                raise ValidationError("labels must be one integer per target node")
            if lab.min() < 0:
                raise ValidationError("labels must be nonnegative")
            object.__setattr__(self, "labels", lab)

    def type_count(self, name: str) -> int:
        for n, c in self.node_types:
            if n == name:
                return c
        raise ValidationError(f"unknown node type {name!r}")

    def relation(self, name: str) -> RelationMatrix:
        for rel in self.relations:
            if rel.name == name:
                return rel
        raise ValidationError(f"unknown relation {name!r}")

    @property
    def n_targets(self) -> int:
        return self.type_count(self.target_type)

    def with_relations(self, relations: Sequence[RelationMatrix]) -> "HeteroGraph":
        """Copy of the graph with the relation list replaced."""
        return HeteroGraph(self.node_types, tuple(relations), self.target_type,
                           self.features, self.labels)


@dataclass(frozen=True)
class MetapathSpec:
    """A closed metapath given as a chain of (relation name, reverse flag).

    A reversed step walks the relation from destination to source. The type
    chain must start and end at the graph's target type and have length >= 2.
    """

    name: str
    chain: tuple[tuple[str, bool], ...]

    def __post_init__(self):
        object.__setattr__(self, "chain", tuple((str(r), bool(f)) for r, f in self.chain))
        if len(self.chain) < 2:
            raise ValidationError(f"metapath {self.name!r} must chain >= 2 relations")

    def validate(self, graph: HeteroGraph) -> None:
        """Check the relation chain exists and its types close on the target."""
        current = graph.target_type
        for rel_name, reverse in self.chain:
            rel = graph.relation(rel_name)
            start, end = (rel.dst_type, rel.src_type) if reverse else (rel.src_type, rel.dst_type)
            if start != current:
                raise ValidationError(
                    f"metapath {self.name!r}: step {rel_name!r} starts at {start!r}, "
                    f"expected {current!r}"
                )
            current = end
        if current != graph.target_type:
            raise ValidationError(
                f"metapath {self.name!r} ends at {current!r}, not target {graph.target_type!r}"
            )


@dataclass(frozen=True)
class MetapathSubgraph:
    """Homogeneous subgraph over target nodes induced by a closed metapath.

    ``adjacency`` is symmetric with a zero diagonal; entry (i, j) is the
    number of distinct metapath instances joining i and j (the connection
    strength). ``self_counts`` keeps the composition diagonal removed from
    the adjacency; it is what PathSim needs.
    """

    spec: MetapathSpec
    adjacency: sp.csr_array
    self_counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        adj = _as_int_csr(self.adjacency)
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise ValidationError("subgraph adjacency must be square")
        if adj.diagonal().any():
            raise ValidationError("subgraph adjacency must have a zero diagonal")
        object.__setattr__(self, "adjacency", adj)
        if self.self_counts is None:
            object.__setattr__(self, "self_counts", np.zeros(n, dtype=np.int64))
        else:
            object.__setattr__(self, "self_counts",
                               np.asarray(self.self_counts, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        """Number of undirected node pairs with at least one path."""
        return self.adjacency.nnz // 2

    def edge_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangle edges as (rows, cols, strengths)."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        return coo.row, coo.col, coo.data

    def with_adjacency(self, adjacency) -> "MetapathSubgraph":
        return MetapathSubgraph(self.spec, adjacency, self.self_counts)


def compose_metapath(graph: HeteroGraph, spec: MetapathSpec) -> MetapathSubgraph:
    """Compose the relation chain into a metapath subgraph.

    The adjacency is the chained sparse integer product of the relation
    matrices (transposed on reversed steps); entry (i, j) counts the
    distinct metapath instances joining i and j. The diagonal (paths from
    a node back to itself) is removed from the adjacency and kept in
    ``self_counts``.
    """
    spec.validate(graph)
    product = None
    for rel_name, reverse in spec.chain:
        step = graph.relation(rel_name).entries
        if reverse:
            step = step.T
        product = step if product is None else product @ step
    product = sp.csr_array(product)
    diag = product.diagonal().astype(np.int64, copy=True)
    coo = product.tocoo()
    off = coo.row != coo.col
    adj = sp.csr_array((coo.data[off], (coo.row[off], coo.col[off])), shape=product.shape)
    return MetapathSubgraph(spec, adj, diag)


def mhr(sub: MetapathSubgraph, labels: np.ndarray) -> float:
    """Fraction of subgraph edges joining same-label nodes.

    Each undirected node pair counts once; path multiplicity is ignored.
    Raises for an edgeless subgraph, where the ratio is undefined.
    """
    labels = np.asarray(labels)
    if labels.shape[0] != sub.n_nodes:
        raise ValidationError("labels must cover all target nodes")
    rows, cols, _ = sub.edge_pairs()
    if rows.size == 0:
        raise EdgelessGraphError(f"subgraph {sub.spec.name!r} has no edges; ratio undefined")
    return float(np.mean(labels[rows] == labels[cols]))


@dataclass(frozen=True)
class StrengthBucket:
    """Homophily ratio of edges whose strength falls in [lo, hi)."""

    lo: int
    hi: Optional[int]  # None = unbounded
    edge_count: int
    mhr: Optional[float]  # None when the bucket is empty

    @property
    def label(self) -> str:
        if self.hi is None:
            return f">={self.lo}"
        if self.hi == self.lo + 1:
            return str(self.lo)
        return f"[{self.lo},{self.hi})"


def mcs_homophily_profile(sub: MetapathSubgraph, labels: np.ndarray,
                          thresholds: Sequence[int]) -> list[StrengthBucket]:
    """Per-strength-bucket homophily ratios.

    ``thresholds`` are increasing lower bounds; bucket k covers strengths
    in [t_k, t_{k+1}) and the last bucket is unbounded above. An empty
    bucket is reported with count 0 and a null ratio.
    """
    labels = np.asarray(labels)
    if labels.shape[0] != sub.n_nodes:
        raise ValidationError("labels must cover all target nodes")
    thresholds = [int(t) for t in thresholds]
    if not thresholds or any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValidationError("thresholds must be a nonempty increasing sequence")
    rows, cols, strength = sub.edge_pairs()
    if rows.size == 0:
        raise EdgelessGraphError(f"subgraph {sub.spec.name!r} has no edges; ratio undefined")
    same = labels[rows] == labels[cols]
    out = []
    bounds = thresholds + [None]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        mask = strength >= lo if hi is None else (strength >= lo) & (strength < hi)
        count = int(mask.sum())
        ratio = float(np.mean(same[mask])) if count else None
        out.append(StrengthBucket(lo, hi, count, ratio))
    return out


def total_strength(graph: HeteroGraph, specs: Sequence[MetapathSpec]) -> sp.csr_array:
    """Sum of connection strengths over all metapath subgraphs."""
    total = None
    for spec in specs:
        adj = compose_metapath(graph, spec).adjacency
        total = adj if total is None else total + adj
    if total is None:
        raise ValidationError("at least one metapath spec is required")
    return sp.csr_array(total)


def build_strength_indicator(graph: HeteroGraph, specs: Sequence[MetapathSpec],
                             delta: int) -> np.ndarray:
    """Binary matrix marking pairs whose total connection strength exceeds delta.

    Strictly greater than ``delta``; symmetric with a zero diagonal.
    """
    if delta < 1:
        raise ValidationError("delta must be >= 1")
    total = total_strength(graph, specs).toarray()
    indicator = (total > delta).astype(np.float64)
    np.fill_diagonal(indicator, 0.0)
    return indicator


def build_topk_similarity(features: np.ndarray, k: int) -> np.ndarray:
    """Mutual-OR top-k cosine similarity graph over feature rows.

    Each row links to its k most cosine-similar distinct rows (ties broken
    by ascending index; zero rows get similarity 0 to everything), and the
    result is symmetrized by logical OR with a zero diagonal.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ValidationError("k must be >= 1")
    if n <= k:
        raise ValidationError(f"need more than k={k} nodes, got {n}")
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = x / safe[:, None]
    sims = unit @ unit.T
    sims[norms == 0, :] = 0.0
    sims[:, norms == 0] = 0.0
    np.fill_diagonal(sims, -np.inf)
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        order = np.argsort(-sims[i], kind="stable")  # stable: ties keep ascending index
        out[i, order[:k]] = 1.0
    out = np.maximum(out, out.T)
    np.fill_diagonal(out, 0.0)
    return out
