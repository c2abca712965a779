"""Graph augmentation: heterogeneous edge dropping, metapath-level baselines,
node feature dropping, retention-probability math, and a topology attack.

Heterogeneous edge dropping removes raw typed edges before metapath
composition, which preferentially preserves strongly connected node pairs;
the metapath-level variants drop composed edges directly and serve as
baselines. Every operation takes an explicit RNG stream and is pure given
that stream.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .hetgraph import (HeteroGraph, MetapathSpec, MetapathSubgraph,
                       RelationMatrix, compose_metapath, mhr)
from .rng import stream

HE_RANDOM = "he_random"
MP_RANDOM = "mp_random"
MP_PATHSIM = "mp_pathsim"
MP_WEIGHT = "mp_weight"
STRATEGIES = (HE_RANDOM, MP_RANDOM, MP_PATHSIM, MP_WEIGHT)

# Cap on the per-edge drop probability in the score-guided schemes.
DROP_PROB_CAP = 0.9


@dataclass(frozen=True)
class AugmentConfig:
    """Settings for producing one augmented view."""

    strategy: str = HE_RANDOM
    drop_ratio: float = 0.4
    feature_drop_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown augmentation strategy {self.strategy!r}")
        if not 0.0 <= self.drop_ratio < 1.0:
            raise ValidationError("drop_ratio must be in [0, 1)")
        if not 0.0 <= self.feature_drop_ratio < 1.0:
            raise ValidationError("feature_drop_ratio must be in [0, 1)")


@dataclass(frozen=True)
class AugmentedView:
    """Post-augmentation metapath subgraphs and features for one view."""

    subgraphs: tuple[MetapathSubgraph, ...]
    features: np.ndarray
    config: Optional[AugmentConfig] = None
    draw_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subgraphs", tuple(self.subgraphs))


def retention_probability(p: float, n: int, l: int = 2) -> float:
    """Probability that a composed edge with connection strength ``n``
    survives dropping each raw edge independently with probability ``p``.

    A single length-``l`` path survives iff all of its edges survive,
    which happens with probability (1-p)^l; the composed edge survives
    iff at least one of its ``n`` paths does: 1 - (1 - (1-p)^l)^n.
    For l = 2 this is 1 - (2p - p^2)^n.
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError("p must be in [0, 1]")
    if n < 1 or l < 2:
        raise ValidationError("need n >= 1 and l >= 2")
    return float(1.0 - (1.0 - (1.0 - p) ** l) ** n)


def _thin_relation(rel: RelationMatrix, p: float, rng: np.random.Generator) -> RelationMatrix:
    """Drop each stored edge of one relation independently with probability p."""
    coo = rel.entries.tocoo()
    keep = rng.random(coo.nnz) >= p
    thinned = sp.csr_array((coo.data[keep], (coo.row[keep], coo.col[keep])),
                           shape=rel.shape)
    return RelationMatrix(rel.name, rel.src_type, rel.dst_type, thinned)


def he_drop(graph: HeteroGraph, specs: Sequence[MetapathSpec], p: float,
            rng: np.random.Generator) -> AugmentedView:
    """Heterogeneous edge dropping: thin every relation, then recompose.

    Each nonzero entry of each relation matrix is removed independently
    with probability ``p``; metapath subgraphs are recomposed from the
    thinned relations. Features pass through unchanged.
    """
    if not 0.0 <= p < 1.0:
        raise ValidationError("p must be in [0, 1)")
    thinned = graph.with_relations([_thin_relation(r, p, rng) for r in graph.relations])
    subs = tuple(compose_metapath(thinned, spec) for spec in specs)
    return AugmentedView(subs, graph.features)


def pathsim_scores(sub: MetapathSubgraph) -> np.ndarray:
    """PathSim value for every upper-triangle edge of the subgraph.

    PathSim(i, j) = 2 n_ij / (n_ii + n_jj) where the self counts come from
    the composition diagonal (paths from a node back to itself).
    """
    rows, cols, strength = sub.edge_pairs()
    denom = sub.self_counts[rows] + sub.self_counts[cols]
    return np.where(denom > 0, 2.0 * strength / np.maximum(denom, 1), 0.0)


def _drop_probabilities(scores: np.ndarray, p: float) -> np.ndarray:
    """Map per-edge keep scores to drop probabilities with expected ratio ~ p.

    Edges scoring below the mean are dropped more aggressively, edges near
    the maximum are nearly always kept; all probabilities are capped. When
    every score is equal the scheme degenerates to uniform dropping.
    """
    s_max = scores.max()
    s_mean = scores.mean()
    if s_max == s_mean:
        return np.full(scores.shape, p)
    raw = p * (s_max - scores) / (s_max - s_mean)
    return np.clip(raw, 0.0, DROP_PROB_CAP)


def mp_drop(subgraphs: Sequence[MetapathSubgraph], p: float, mode: str,
            rng: np.random.Generator) -> list[MetapathSubgraph]:
    """Metapath-level edge dropping over composed subgraphs.

    ``mode`` selects uniform dropping (``mp_random``) or score-guided
    dropping where the keep score is the PathSim value (``mp_pathsim``)
    or the raw connection strength (``mp_weight``). Undirected edges are
    dropped as pairs, so results stay symmetric.
    """
    if not 0.0 <= p < 1.0:
        raise ValidationError("p must be in [0, 1)")
    if mode not in (MP_RANDOM, MP_PATHSIM, MP_WEIGHT):
        raise ValidationError(f"unknown mp_drop mode {mode!r}")
    out = []
    for sub in subgraphs:
        rows, cols, strength = sub.edge_pairs()
        if rows.size == 0:
            out.append(sub)
            continue
        if mode == MP_RANDOM:
            probs = np.full(rows.shape, p)
        elif mode == MP_WEIGHT:
            probs = _drop_probabilities(strength.astype(np.float64), p)
        else:
            probs = _drop_probabilities(pathsim_scores(sub), p)
        keep = rng.random(rows.size) >= probs
        r, c, v = rows[keep], cols[keep], strength[keep]
        adj = sp.csr_array((np.concatenate([v, v]),
                            (np.concatenate([r, c]), np.concatenate([c, r]))),
                           shape=sub.adjacency.shape)
        out.append(sub.with_adjacency(adj))
    return out


def node_feature_drop(features: np.ndarray, q: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Zero the feature rows of a uniformly random floor(q*N)-subset of nodes."""
    if not 0.0 <= q < 1.0:
        raise ValidationError("q must be in [0, 1)")
    x = np.array(features, dtype=np.float64, copy=True)
    n_drop = int(np.floor(q * x.shape[0]))
    if n_drop:
        dropped = rng.choice(x.shape[0], size=n_drop, replace=False)
        x[dropped] = 0.0
    return x


def make_view(graph: HeteroGraph, specs: Sequence[MetapathSpec],
              config: AugmentConfig, rng: np.random.Generator,
              draw_index: int = 0) -> AugmentedView:
    """Produce one augmented view per the configured strategy."""
    if config.strategy == HE_RANDOM:
        view = he_drop(graph, specs, config.drop_ratio, rng)
    else:
        base = [compose_metapath(graph, spec) for spec in specs]
        mode = config.strategy
        subs = mp_drop(base, config.drop_ratio, mode, rng)
        view = AugmentedView(tuple(subs), graph.features)
    feats = node_feature_drop(graph.features, config.feature_drop_ratio, rng)
    return replace(view, features=feats, config=config, draw_index=draw_index)


def identity_view(graph: HeteroGraph, specs: Sequence[MetapathSpec]) -> AugmentedView:
    """The unaugmented graph packaged as a view."""
    subs = tuple(compose_metapath(graph, spec) for spec in specs)
    return AugmentedView(subs, graph.features)


@dataclass(frozen=True)
class StudyResult:
    """Mean/std homophily ratio over repeated augmentation draws."""

    mean: float
    std: float
    trials: int
    skipped: int


def augmentation_mhr_study(graph: HeteroGraph, spec: MetapathSpec,
                           labels: np.ndarray, config: AugmentConfig,
                           trials: int) -> StudyResult:
    """Run the configured strategy repeatedly and summarize the view MHR.

    Trials whose augmented subgraph ends up edgeless are skipped and
    counted. Trial streams are derived from ``config.seed`` so trials are
    independent and the study is reproducible.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    values = []
    skipped = 0
    base = compose_metapath(graph, spec)
    for t in range(trials):
        rng = stream(config.seed, "mhr-study", config.strategy, t)
        if config.strategy == HE_RANDOM:
            sub = he_drop(graph, [spec], config.drop_ratio, rng).subgraphs[0]
        else:
            sub = mp_drop([base], config.drop_ratio, config.strategy, rng)[0]
        if sub.n_edges == 0:
            skipped += 1
            continue
        values.append(mhr(sub, labels))
    if not values:
        raise ValidationError("every trial produced an edgeless subgraph")
    arr = np.asarray(values)
    return StudyResult(float(arr.mean()), float(arr.std()), trials, skipped)


def topology_attack(graph: HeteroGraph, ratio: float,
                    rng: np.random.Generator) -> HeteroGraph:
    """Rewire a fraction of each relation's edges to random non-edges.

    For every relation, floor(ratio * nnz) edges are removed and the same
    number of uniformly random previously absent edges are added, so the
    edge count per relation is preserved.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValidationError("ratio must be in [0, 1)")
    new_relations = []
    for rel in graph.relations:
        coo = rel.entries.tocoo()
        k = int(np.floor(ratio * coo.nnz))
        if k == 0:
            new_relations.append(rel)
            continue
        n_rows, n_cols = rel.shape
        n_cells = n_rows * n_cols
        existing = set((coo.row.astype(np.int64) * n_cols + coo.col).tolist())
        if n_cells - len(existing) < k:
            raise ValidationError(
                f"relation {rel.name!r} too dense to rewire {k} edges"
            )
        removed = rng.choice(coo.nnz, size=k, replace=False)
        keep = np.ones(coo.nnz, dtype=bool)
        keep[removed] = False
        added: list[int] = []
        seen = set()
        while len(added) < k:
            draw = rng.integers(0, n_cells, size=max(2 * (k - len(added)), 16))
            for cell in draw.tolist():
                if cell in existing or cell in seen:
                    continue
                seen.add(cell)
                added.append(cell)
                if len(added) == k:
                    break
        added_arr = np.asarray(added, dtype=np.int64)
        rows = np.concatenate([coo.row[keep], added_arr // n_cols])
        cols = np.concatenate([coo.col[keep], added_arr % n_cols])
        data = np.concatenate([coo.data[keep], np.ones(k, dtype=np.int64)])
        entries = sp.csr_array((data, (rows, cols)), shape=rel.shape)
        new_relations.append(RelationMatrix(rel.name, rel.src_type, rel.dst_type, entries))
    return graph.with_relations(new_relations)
