"""Independent oracles used by the tests.

Everything here recomputes expected values by a route disjoint from the
package implementation: explicit path enumeration instead of sparse
products, dense matrix formulas instead of sparse propagation, and pairwise
brute force instead of vectorized similarity ranking.
"""

from __future__ import annotations

import numpy as np

from hgsel.hetgraph import HeteroGraph, MetapathSpec


def count_paths_brute_force(graph: HeteroGraph, spec: MetapathSpec) -> np.ndarray:
    """Count distinct metapath instances by explicit DFS over the chain.

    Walks every (v_0, v_1, ..., v_l) sequence along the relation chain,
    multiplying parallel-edge counts, and accumulates counts per (v_0, v_l)
    pair. The diagonal is zeroed to match the subgraph convention.
    """
    steps = []
    for rel_name, reverse in spec.chain:
        rel = graph.relation(rel_name)
        dense = rel.entries.toarray()
        steps.append(dense.T if reverse else dense)
    n = steps[0].shape[0]
    counts = np.zeros((n, n), dtype=np.int64)

    def walk(start: int, node: int, depth: int, multiplicity: int) -> None:
        if depth == len(steps):
            counts[start, node] += multiplicity
            return
        row = steps[depth][node]
        for nxt in np.flatnonzero(row):
            walk(start, int(nxt), depth + 1, multiplicity * int(row[nxt]))

    for start in range(n):
        walk(start, start, 0, 1)
    np.fill_diagonal(counts, 0)
    return counts


def dense_gcn_oracle(adjacency: np.ndarray, features: np.ndarray) -> np.ndarray:
    """(D+I)^{-1/2} (A_bin + I) (D+I)^{-1/2} X computed densely."""
    binary = (adjacency > 0).astype(np.float64)
    n = binary.shape[0]
    with_self = binary + np.eye(n)
    deg = with_self.sum(axis=1)
    scal = np.diag(1.0 / np.sqrt(deg))
    return scal @ with_self @ scal @ features


def topk_cosine_brute_force(features: np.ndarray, k: int) -> np.ndarray:
    """Top-k cosine links by per-pair loops; OR-symmetrized, zero diagonal."""
    n = features.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        sims = []
        for j in range(n):
            if j == i:
                continue
            ni = np.linalg.norm(features[i])
            nj = np.linalg.norm(features[j])
            sim = 0.0 if ni == 0 or nj == 0 else float(
                features[i] @ features[j] / (ni * nj))
            sims.append((-sim, j))
        sims.sort()
        for _, j in sims[:k]:
            out[i, j] = 1.0
    out = np.maximum(out, out.T)
    np.fill_diagonal(out, 0.0)
    return out


def mhr_brute_force(adjacency: np.ndarray, labels: np.ndarray) -> float:
    """Edge homophily by explicit pair loops over the upper triangle."""
    n = adjacency.shape[0]
    same = 0
    total = 0
    for i in range(n):
        for j in range(i + 1, n):
            if adjacency[i, j] > 0:
                total += 1
                same += int(labels[i] == labels[j])
    if total == 0:
        raise ZeroDivisionError("no edges")
    return same / total
