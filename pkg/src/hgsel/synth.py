"""Planted-partition synthetic heterogeneous graphs.

Target nodes carry hidden classes; every attribute node gets a class
affinity; target-attribute edges appear with probability q_in when the
classes agree and q_out otherwise. Same-class target pairs therefore share
more attribute neighbors, which makes connection strength correlate with
homophily, the regime the augmentation strategy exploits. Features are
class means plus isotropic noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .hetgraph import HeteroGraph, MetapathSpec, RelationMatrix
from .rng import stream


@dataclass(frozen=True)
class AttributeTypeSpec:
    """One attribute node type and its class-conditional edge rates."""

    name: str
    count: int
    q_in: float
    q_out: float

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError("attribute count must be >= 1")
        for q in (self.q_in, self.q_out):
            if not 0.0 <= q <= 1.0:
                raise ValidationError("edge probabilities must be in [0, 1]")
        if self.q_in < self.q_out:
            raise ValidationError("q_in must be >= q_out")

    def to_dict(self) -> dict:
        return {"name": self.name, "count": self.count,
                "q_in": self.q_in, "q_out": self.q_out}

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeTypeSpec":
        return cls(d["name"], int(d["count"]), float(d["q_in"]), float(d["q_out"]))


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale generator settings."""

    n_classes: int = 3
    n_targets: int = 600
    attributes: tuple[AttributeTypeSpec, ...] = (
        AttributeTypeSpec("author", 100, 0.18, 0.015),
        AttributeTypeSpec("subject", 30, 0.28, 0.060),
    )
    feature_dim: int = 32
    class_separation: float = 1.0
    feature_noise: float = 1.0
    target_type: str = "paper"
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.n_targets < self.n_classes:
            raise ValidationError("need at least one target node per class")
        if not self.attributes:
            raise ValidationError("need at least one attribute type")
        object.__setattr__(self, "attributes", tuple(
            a if isinstance(a, AttributeTypeSpec) else AttributeTypeSpec(**a)
            for a in self.attributes))

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "n_targets": self.n_targets,
            "attributes": [a.to_dict() for a in self.attributes],
            "feature_dim": self.feature_dim,
            "class_separation": self.class_separation,
            "feature_noise": self.feature_noise,
            "target_type": self.target_type,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "attributes" in d:
            d["attributes"] = tuple(AttributeTypeSpec.from_dict(a)
                                    for a in d["attributes"])
        return cls(**d)


def _balanced_assignment(n: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    base = np.arange(n) % n_classes
    return base[rng.permutation(n)]


def synth_generate(spec: SyntheticSpec) -> tuple[HeteroGraph, list[MetapathSpec]]:
    """Generate a graph and one closed metapath per attribute type."""
    rng = stream(spec.seed, "synth")
    labels = _balanced_assignment(spec.n_targets, spec.n_classes, rng)

    relations = []
    metapaths = []
    node_types = [(spec.target_type, spec.n_targets)]
    for attr in spec.attributes:
        affinity = _balanced_assignment(attr.count, spec.n_classes, rng)
        probs = np.where(labels[:, None] == affinity[None, :], attr.q_in, attr.q_out)
        entries = sp.csr_array((rng.random((spec.n_targets, attr.count)) < probs)
                               .astype(np.int64))
        rel_name = f"{spec.target_type}-{attr.name}"
        relations.append(RelationMatrix(rel_name, spec.target_type, attr.name, entries))
        node_types.append((attr.name, attr.count))
        metapaths.append(MetapathSpec(
            name=f"{spec.target_type}-{attr.name}-{spec.target_type}",
            chain=((rel_name, False), (rel_name, True)),
        ))

    means = rng.normal(0.0, 1.0, size=(spec.n_classes, spec.feature_dim))
    means *= spec.class_separation / np.linalg.norm(means, axis=1, keepdims=True)
    features = means[labels] + spec.feature_noise * rng.normal(
        0.0, 1.0, size=(spec.n_targets, spec.feature_dim))

    graph = HeteroGraph(
        node_types=tuple(node_types),
        relations=tuple(relations),
        target_type=spec.target_type,
        features=features,
        labels=labels,
    )
    return graph, metapaths
