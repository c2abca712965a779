import numpy as np
import pytest
import scipy.sparse as sp

from hgsel.hetgraph import HeteroGraph, MetapathSpec, RelationMatrix
from hgsel.synth import SyntheticSpec, synth_generate


def relation_from_edges(name, src_type, dst_type, edges, shape):
    rows = np.array([e[0] for e in edges], dtype=np.int64)
    cols = np.array([e[1] for e in edges], dtype=np.int64)
    entries = sp.csr_array((np.ones(len(edges), dtype=np.int64), (rows, cols)),
                           shape=shape)
    return RelationMatrix(name, src_type, dst_type, entries)


def paper_author_graph(edges, n_papers=3, n_authors=3, labels=None, features=None):
    """Tiny paper/author graph with a single paper-author relation."""
    if features is None:
        features = np.eye(n_papers)
    return HeteroGraph(
        node_types=(("paper", n_papers), ("author", n_authors)),
        relations=(relation_from_edges("PA", "paper", "author", edges,
                                       (n_papers, n_authors)),),
        target_type="paper",
        features=np.asarray(features, dtype=float),
        labels=None if labels is None else np.asarray(labels),
    )


PAP = MetapathSpec("PAP", (("PA", False), ("PA", True)))


@pytest.fixture(scope="session")
def pap_spec():
    return PAP


@pytest.fixture(scope="session")
def synth_graph():
    """Session-scoped default synthetic graph (medium effort to build)."""
    graph, specs = synth_generate(SyntheticSpec(seed=11))
    return graph, specs


@pytest.fixture(scope="session")
def small_synth_graph():
    """Smaller synthetic instance for quicker structural tests."""
    from hgsel.synth import AttributeTypeSpec

    spec = SyntheticSpec(
        n_classes=3,
        n_targets=90,
        attributes=(
            AttributeTypeSpec("a", 30, 0.3, 0.04),
            AttributeTypeSpec("b", 12, 0.4, 0.08),
        ),
        feature_dim=8,
        seed=5,
    )
    graph, specs = synth_generate(spec)
    return graph, specs


def random_hetero_graph(rng, n_targets=None, n_attrs=None, density=0.25):
    """Random bipartite-relation graph for property tests."""
    n_targets = n_targets or int(rng.integers(3, 12))
    n_attrs = n_attrs or int(rng.integers(2, 10))
    entries = (rng.random((n_targets, n_attrs)) < density).astype(np.int64)
    # occasionally add parallel edges
    entries += ((rng.random((n_targets, n_attrs)) < 0.05) & (entries > 0)).astype(np.int64)
    graph = HeteroGraph(
        node_types=(("t", n_targets), ("a", n_attrs)),
        relations=(RelationMatrix("TA", "t", "a", sp.csr_array(entries)),),
        target_type="t",
        features=rng.normal(size=(n_targets, 4)),
    )
    spec = MetapathSpec("TAT", (("TA", False), ("TA", True)))
    return graph, spec
